"""
External Draws - K small-m tests on a precomputed bootstrap pool

The pool is standardized with its own mean and standard deviation, split by
a seeded permutation into K disjoint blocks of m draws (or sampled with
replacement on explicit request), and each block is tested against the
measure's null law.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from src.engines.diagnostics import Standardizer, profile_from_p_values, run_test
from src.engines.reference import ReferenceLibrary, needs_table
from src.engines.streams import ArraySource
from src.errors import ExternalPoolError, ResultsIOError
from src.models.diagnostic import DiagnosticConfig, DiagnosticOutcome, RejectionProfile
from src.models.seeds import POOL_STREAM, SeedSpec


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExternalDrawPool:
    """Precomputed bootstrap draws in their given order"""
    draws: np.ndarray
    label: str = "external"

    def __post_init__(self):
        arr = np.asarray(self.draws, dtype=float).ravel()
        if arr.size < 1:
            raise ExternalPoolError(f"{self.label}: pool is empty")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise ExternalPoolError(
                f"{self.label}: non-finite draws at positions {', '.join(map(str, bad[:10] + 1))}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "draws", arr)

    @property
    def B(self) -> int:
        return int(self.draws.size)

    @classmethod
    def from_csv(cls, path: Path, label: Optional[str] = None) -> "ExternalDrawPool":
        """
        Single-column CSV, optional header line

        Unparsable or non-finite entries are reported with their line numbers.
        """
        path = Path(path)
        values: List[float] = []
        problems: List[str] = []
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                for lineno, row in enumerate(csv.reader(fh), start=1):
                    if not row or not "".join(row).strip():
                        continue
                    if len(row) != 1:
                        problems.append(f"line {lineno}: expected one column, got {len(row)}")
                        continue
                    text = row[0].strip()
                    try:
                        value = float(text)
                    except ValueError:
                        if lineno == 1 and not values:
                            continue  # header
                        problems.append(f"line {lineno}: cannot parse '{text}'")
                        continue
                    if not math.isfinite(value):
                        problems.append(f"line {lineno}: non-finite value '{text}'")
                        continue
                    values.append(value)
        except OSError as e:
            raise ResultsIOError(path, f"cannot read draw pool: {e}") from e

        if problems:
            shown = "; ".join(problems[:10])
            more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
            raise ExternalPoolError(f"{path}: {shown}{more}")
        return cls(np.array(values), label or path.stem)


@dataclass(frozen=True, eq=False)
class ExternalResult:
    profile: RejectionProfile
    outcomes: List[DiagnosticOutcome]
    blocks: np.ndarray            # K x m pool indices
    location: float
    scale: float
    with_replacement: bool = False
    label: str = field(default="external")

    def to_records(self) -> List[dict]:
        return [{"test": k, **o.to_record()} for k, o in enumerate(self.outcomes)]


def run_external(
    pool: ExternalDrawPool,
    m: int,
    K: int,
    config: DiagnosticConfig,
    seed: SeedSpec,
    library: Optional[ReferenceLibrary] = None,
    with_replacement: bool = False,
    alphas: Optional[Sequence[float]] = None,
) -> ExternalResult:
    """
    Rejection profile of K tests on blocks of the pool

    Standardization uses the whole pool (M = B); config.standardization is
    therefore not applied a second time.

    Args:
        pool: Externally produced bootstrap draws
        m: Draws per test
        K: Number of tests; K * m must not exceed B unless with_replacement
        config: Measure and level of each test
        seed: Master seed of the block permutation (or resampling) stream
        library: Reference tables for table-backed measures
        with_replacement: Draw each block with replacement instead of
            taking disjoint blocks
        alphas: Levels of the profile; default_alpha_grid() when None

    Returns:
        ExternalResult with per-test outcomes, the block indices, the
        pool location and scale, and the rejection profile

    Raises:
        ExternalPoolError: bad m or K, a pool too small for K * m, or a
            pool with zero variance
    """
    if m < 1 or K < 1:
        raise ExternalPoolError(f"m and K must be >= 1, got m={m}, K={K}")
    if not with_replacement and K * m > pool.B:
        raise ExternalPoolError(
            f"{pool.label}: K*m = {K * m} exceeds the pool size B = {pool.B}; "
            "shrink K or m, or allow sampling with replacement"
        )

    location = float(np.mean(pool.draws))
    scale = float(np.std(pool.draws))
    if not scale > 0.0:
        raise ExternalPoolError(f"{pool.label}: pool has zero variance")
    standardized = (pool.draws - location) / scale

    rng = SeedSpec(seed.master_seed, (POOL_STREAM,)).generator()
    if with_replacement:
        blocks = rng.integers(0, pool.B, size=(K, m))
    else:
        blocks = rng.permutation(pool.B)[: K * m].reshape(K, m)

    test_config = DiagnosticConfig(
        m=m, measure=config.measure, level_alpha=config.level_alpha
    )
    if library is not None and needs_table(test_config.measure):
        library.table_for(test_config.measure, m)

    identity = Standardizer()
    outcomes = [
        run_test(
            ArraySource(standardized[block], f"{pool.label}/{k}"), test_config, library, identity
        )
        for k, block in enumerate(blocks)
    ]
    profile = profile_from_p_values([o.p_value for o in outcomes], m, alphas)
    logger.info(
        f"{pool.label}: {K} tests of m={m} from B={pool.B}, "
        f"pi_hat(0.05)={profile.rate_at(0.05):.3f}"
    )
    return ExternalResult(
        profile=profile,
        outcomes=outcomes,
        blocks=blocks,
        location=location,
        scale=scale,
        with_replacement=with_replacement,
        label=pool.label,
    )
