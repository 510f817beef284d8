"""
Reference Laws - null distributions of the scaled discrepancy

KS and signed KS have closed-form limits. Every other measure reads its
p-values from a simulated ReferenceTable: the law of the scaled statistic
over m_ref i.i.d. N(0,1) draws (a finite-m law at m_ref = m for the moment
measure). A ReferenceLibrary resolves tables from memory, then from the
on-disk cache, and builds missing ones when allowed.
"""

import logging
import math
import time
from typing import Dict, Optional, Tuple

import numpy as np

from src.data.table_cache import TableCache
from src.engines.discrepancy import evaluate
from src.engines.parallel import auto_chunksize, parallel_map
from src.engines.probkernel import (
    kolmogorov_one_sided_quantile,
    kolmogorov_one_sided_sf,
    kolmogorov_quantile,
    kolmogorov_sf,
    std_normal_cdf,
)
from src.errors import DomainError, MissingReferenceTableError
from src.models.diagnostic import ReferenceKind, ReferenceTable
from src.models.measures import DiscrepancyMeasure, MeasureKind, SortedSample
from src.models.seeds import TABLE_STREAM, SeedSpec


logger = logging.getLogger(__name__)

MIN_LIMIT_M_REF = 1_000
MIN_REPLICATIONS = 10_000
# Replications generated from one sub-stream; fixed so tables do not depend on workers
CHUNK_REPLICATIONS = 64


# ============================================================
# Scaling and keys
# ============================================================

def scale_statistic(measure: DiscrepancyMeasure, value: float, m: int) -> float:
    """sqrt(m) d for norm-type measures, m d for the moment quadratic form"""
    if measure.is_norm_type:
        return math.sqrt(m) * value
    return m * value


def needs_table(measure: DiscrepancyMeasure) -> bool:
    return measure.kind not in (
        MeasureKind.KS,
        MeasureKind.SIGNED_KS_PLUS,
        MeasureKind.SIGNED_KS_MINUS,
    )


def measure_key(measure: DiscrepancyMeasure) -> str:
    """
    Identity of a measure's null law

    Interval and point laws depend only on the Phi-image of their
    parameters, so they are keyed by it.
    """
    if measure.kind == MeasureKind.INTERVAL_SUP:
        lo = float(std_normal_cdf(measure.lower))
        hi = float(std_normal_cdf(measure.upper))
        return f"interval-phi{lo!r}_{hi!r}"
    if measure.kind == MeasureKind.POINT_ABS:
        return f"point-phi{float(std_normal_cdf(measure.x))!r}"
    return measure.label


def table_key(measure: DiscrepancyMeasure, m_ref: int, replications: int, seed: SeedSpec) -> str:
    path = "-".join(str(p) for p in seed.stream_path)
    return f"{measure_key(measure)}-m{m_ref}-r{replications}-s{seed.master_seed}-{path}"


# ============================================================
# Table construction
# ============================================================

def _table_chunk(task: Tuple[DiscrepancyMeasure, int, SeedSpec, int]) -> np.ndarray:
    measure, m_ref, seed, count = task
    rows = seed.generator().standard_normal((count, m_ref))
    out = np.empty(count)
    for i, row in enumerate(rows):
        d = evaluate(SortedSample.from_draws(row), measure)
        out[i] = scale_statistic(measure, d.value, m_ref)
    return out


def build_reference_table(
    measure: DiscrepancyMeasure,
    m_ref: int,
    reps: int,
    seed: SeedSpec,
    workers: int = 1,
) -> ReferenceTable:
    """
    Simulate the null law of the scaled statistic

    Replications are generated in fixed chunks from seed/chunk_index, then
    sorted once; the result is identical for any worker count.

    Args:
        measure: Discrepancy whose scaled statistic is simulated
        m_ref: Sample size of each replication
        reps: Number of replications, at least MIN_REPLICATIONS
        seed: Root stream of the chunks
        workers: Worker processes

    Returns:
        ReferenceTable with the sorted scaled statistics
    """
    if reps < MIN_REPLICATIONS:
        raise DomainError(f"reference tables need at least {MIN_REPLICATIONS} replications")
    if measure.is_norm_type and m_ref < MIN_LIMIT_M_REF:
        raise DomainError(f"limit-law tables need m_ref >= {MIN_LIMIT_M_REF}, got {m_ref}")
    if m_ref < 1:
        raise DomainError(f"m_ref must be positive, got {m_ref}")

    tasks = []
    for chunk, start in enumerate(range(0, reps, CHUNK_REPLICATIONS)):
        count = min(CHUNK_REPLICATIONS, reps - start)
        tasks.append((measure, m_ref, seed.child(chunk), count))

    started = time.perf_counter()
    parts = parallel_map(_table_chunk, tasks, workers, auto_chunksize(len(tasks), workers))
    table = ReferenceTable(
        measure=measure,
        m_ref=m_ref,
        replications=reps,
        statistics=np.concatenate(parts),
        seed=seed,
        key=table_key(measure, m_ref, reps, seed),
    )
    logger.info(
        f"Built reference table {table.table_id} in {time.perf_counter() - started:.1f}s"
    )
    return table


# ============================================================
# Library
# ============================================================

class ReferenceLibrary:
    """
    Tables by measure

    Moment tables are finite-m: one per test size m. All other tables use the
    library's m_ref.
    """

    def __init__(
        self,
        cache: Optional[TableCache] = None,
        m_ref: int = 10_000,
        reps: int = 200_000,
        seed: Optional[SeedSpec] = None,
        allow_build: bool = True,
        workers: int = 1,
    ):
        self.cache = cache
        self.m_ref = m_ref
        self.reps = reps
        self.seed = seed or SeedSpec(0, (TABLE_STREAM,))
        self.allow_build = allow_build
        self.workers = workers
        self._tables: Dict[str, ReferenceTable] = {}

    @classmethod
    def from_settings(cls, settings, allow_build: bool = True, workers: int = 1):
        return cls(
            cache=TableCache(settings.cache_dir),
            m_ref=settings.table_m_ref,
            reps=settings.table_reps,
            seed=SeedSpec(settings.table_seed, (TABLE_STREAM,)),
            allow_build=allow_build,
            workers=workers,
        )

    def m_ref_for(self, measure: DiscrepancyMeasure, m: int) -> int:
        return self.m_ref if measure.is_norm_type else m

    def add(self, table: ReferenceTable) -> None:
        self._tables[table.table_id] = table

    def table_for(self, measure: DiscrepancyMeasure, m: int) -> ReferenceTable:
        m_ref = self.m_ref_for(measure, m)
        key = table_key(measure, m_ref, self.reps, self.seed)
        if key in self._tables:
            return self._tables[key]

        table = self.cache.load(key) if self.cache is not None else None
        if table is None:
            if not self.allow_build:
                raise MissingReferenceTableError(
                    f"no reference table {key}; run build-tables first"
                )
            logger.warning(f"Reference table {key} not cached, building it now")
            table = build_reference_table(measure, m_ref, self.reps, self.seed, self.workers)
            if self.cache is not None:
                self.cache.save(table)
        self._tables[key] = table
        return table

    def __len__(self) -> int:
        return len(self._tables)

    def __getstate__(self):
        # workers never build in parallel themselves
        state = self.__dict__.copy()
        state["workers"] = 1
        return state


# ============================================================
# p-values and critical values
# ============================================================

def reference_p_value(
    measure: DiscrepancyMeasure,
    t_star: float,
    m: int,
    library: Optional[ReferenceLibrary] = None,
) -> Tuple[float, ReferenceKind, Optional[str]]:
    """p-value of a scaled statistic under the measure's null law"""
    if measure.kind == MeasureKind.KS:
        return kolmogorov_sf(t_star), ReferenceKind.KOLMOGOROV_SERIES, None
    if measure.kind in (MeasureKind.SIGNED_KS_PLUS, MeasureKind.SIGNED_KS_MINUS):
        return kolmogorov_one_sided_sf(t_star), ReferenceKind.ONE_SIDED_EXACT, None
    if library is None:
        raise MissingReferenceTableError(f"measure {measure} needs a reference table")
    table = library.table_for(measure, m)
    return table.p_value(t_star), ReferenceKind.SIMULATED_TABLE, table.table_id


def critical_value(
    measure: DiscrepancyMeasure,
    level: float,
    library: Optional[ReferenceLibrary] = None,
    m: Optional[int] = None,
) -> float:
    """(1 - level) quantile of the measure's null law"""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if measure.kind == MeasureKind.KS:
        return kolmogorov_quantile(1.0 - level)
    if measure.kind in (MeasureKind.SIGNED_KS_PLUS, MeasureKind.SIGNED_KS_MINUS):
        return kolmogorov_one_sided_quantile(1.0 - level)
    if library is None:
        raise MissingReferenceTableError(f"measure {measure} needs a reference table")
    if m is None and not measure.is_norm_type:
        raise DomainError("the moment measure needs the test size m for its finite-m table")
    return library.table_for(measure, m or library.m_ref).quantile(1.0 - level)
