"""
Diagnostics Engine - the bootstrap validity test

run_test draws m statistics from a stream, measures the distance of their
edf to Phi, scales it and reads the p-value from the measure's null law.
rejection_profile repeats this over K independent streams.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.engines.discrepancy import evaluate, ks_distance, sup_distance_to
from src.engines.parallel import auto_chunksize, parallel_map
from src.engines.probkernel import std_normal_cdf
from src.engines.reference import (
    ReferenceLibrary,
    needs_table,
    reference_p_value,
    scale_statistic,
)
from src.engines.scenarios import boundary_closed_form_cdf, boundary_closed_form_left
from src.engines.streams import BootstrapDrawStream, DrawSource
from src.errors import DegenerateFitError, DomainError
from src.models.diagnostic import (
    DiagnosticConfig,
    DiagnosticOutcome,
    RejectionProfile,
    Standardization,
)
from src.models.measures import SortedSample
from src.models.scenario import FittedModel, Variant
from src.models.seeds import SeedSpec


logger = logging.getLogger(__name__)


def default_alpha_grid() -> np.ndarray:
    """99 levels from 0.001 to 0.10, plus 0.05 exactly"""
    grid = np.linspace(0.001, 0.10, 99)
    return np.unique(np.append(grid, 0.05))


# ============================================================
# Standardization
# ============================================================

@dataclass(frozen=True)
class Standardizer:
    """Affine map (T - location) / scale, frozen after the prepass"""
    location: float = 0.0
    scale: float = 1.0

    def apply(self, draws: np.ndarray) -> np.ndarray:
        if self.location == 0.0 and self.scale == 1.0:
            return draws
        return (draws - self.location) / self.scale


def estimate_standardizer(source: DrawSource, config: DiagnosticConfig) -> Standardizer:
    """Moments of M prepass draws from the source's prepass stream"""
    if config.standardization == Standardization.NONE:
        return Standardizer()

    draws = source.prepass_source().take(config.prepass_M)
    mean = float(np.mean(draws))
    if config.standardization == Standardization.SCALE:
        # sigma^2 = V*[T*]
        scale = float(np.std(draws))
        location = 0.0
    else:
        scale = float(np.std(draws))
        location = mean
    if not scale > 0.0:
        raise DegenerateFitError("prepass draws have zero variance")
    logger.debug(
        f"Standardizer from {config.prepass_M} prepass draws: mu={mean:.6g} sd={scale:.6g}"
    )
    return Standardizer(location, scale)


# ============================================================
# Single test
# ============================================================

def diagnose_draws(
    draws: np.ndarray,
    config: DiagnosticConfig,
    library: Optional[ReferenceLibrary] = None,
) -> DiagnosticOutcome:
    """Diagnostic on m draws that are already standardized"""
    sample = SortedSample.from_draws(draws)
    if sample.m != config.m:
        raise DomainError(f"expected m={config.m} draws, got {sample.m}")
    d_star = evaluate(sample, config.measure)
    t_star = scale_statistic(config.measure, d_star.value, sample.m)
    p_value, kind, table_id = reference_p_value(config.measure, t_star, sample.m, library)
    return DiagnosticOutcome(
        m=sample.m,
        d_star=d_star,
        t_star=t_star,
        p_value=min(1.0, max(0.0, p_value)),
        reference=kind,
        table_id=table_id,
    )


def run_test(
    stream: DrawSource,
    config: DiagnosticConfig,
    library: Optional[ReferenceLibrary] = None,
    standardizer: Optional[Standardizer] = None,
) -> DiagnosticOutcome:
    """
    One diagnostic on the next m draws of a stream

    Without a given standardizer, one is estimated from the stream's
    prepass source when the config asks for standardization.
    """
    if standardizer is None:
        standardizer = estimate_standardizer(stream, config)
    draws = standardizer.apply(stream.take(config.m))
    return diagnose_draws(draws, config, library)


# ============================================================
# Choice of m
# ============================================================

@dataclass(frozen=True)
class LogRule:
    """m = max(10, scale * ceil(ln n))"""
    scale: int = 3


@dataclass(frozen=True)
class PowerRule:
    """m = max(10, ceil(n^gamma)), 0 < gamma < 1"""
    gamma: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")


SampleSizeRule = Union[LogRule, PowerRule]


def choose_m(n: int, rule: SampleSizeRule) -> int:
    """Number of bootstrap draws per test for a sample of size n"""
    if n < 8:
        raise DomainError(f"n must be >= 8, got {n}")
    if isinstance(rule, LogRule):
        return max(10, rule.scale * math.ceil(math.log(n)))
    # guard against n^gamma landing a hair above an integer
    return max(10, math.ceil(n**rule.gamma - 1e-9))


def presumed_rate(rule: SampleSizeRule) -> float:
    """
    Smallest Edgeworth-type rate the rule relies on (m / n^(2 rate) -> 0)

    Logarithmic growth works for every positive rate, reported as 0.
    """
    if isinstance(rule, LogRule):
        return 0.0
    return rule.gamma / 2.0


def parse_rule(text: str) -> SampleSizeRule:
    """log | log:scale | power:gamma"""
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name == "log":
            return LogRule(int(arg)) if arg else LogRule()
        if name == "power":
            return PowerRule(float(arg)) if arg else PowerRule()
    except ValueError as e:
        raise DomainError(f"bad sample-size rule '{text}': {e}") from None
    raise DomainError(f"unknown sample-size rule '{text}' (log, log:scale, power:gamma)")


# ============================================================
# Rejection profiles
# ============================================================

def _profile_task(task) -> Tuple[Optional[float], Optional[str]]:
    stream, config, library, standardizer = task
    try:
        return run_test(stream, config, library, standardizer).p_value, None
    except DegenerateFitError as e:
        return None, str(e)


def profile_from_p_values(
    p_values: Sequence[float],
    m: int,
    alphas: Optional[Sequence[float]] = None,
    degenerate_count: int = 0,
) -> RejectionProfile:
    """pi_hat(alpha) = K^-1 sum 1{p_k <= alpha} and sqrt(K) sup |pi_hat - alpha|"""
    p = np.sort(np.asarray(p_values, dtype=float))
    grid = np.asarray(alphas if alphas is not None else default_alpha_grid(), dtype=float)
    if np.any((grid <= 0.0) | (grid >= 1.0)):
        raise DomainError("alpha grid must lie in (0, 1)")
    grid = np.sort(grid)
    K = p.size
    if K < 1:
        raise DomainError("a rejection profile needs at least one test")
    pi_hat = np.searchsorted(p, grid, side="right") / K
    band = math.sqrt(K) * float(np.max(np.abs(pi_hat - grid)))
    return RejectionProfile(
        alphas=grid,
        pi_hat=pi_hat,
        K=K,
        m=m,
        uniform_band_stat=band,
        p_values=np.asarray(p_values, dtype=float),
        degenerate_count=degenerate_count,
    )


def rejection_profile(
    streams: List[DrawSource],
    config: DiagnosticConfig,
    alphas: Optional[Sequence[float]] = None,
    library: Optional[ReferenceLibrary] = None,
    workers: int = 1,
) -> RejectionProfile:
    """
    K independent tests over streams with distinct seeds

    Args:
        streams: One draw source per test, all over the same fitted model
        config: Diagnostic settings shared by every test
        alphas: Levels of the profile; default_alpha_grid() when None
        library: Reference tables for table-backed measures
        workers: Worker processes; results do not depend on it

    Returns:
        RejectionProfile of the p-values, counting degenerate tests apart

    Raises:
        DegenerateFitError: every test hit a degenerate fit
    """
    if not streams:
        raise DomainError("rejection_profile needs at least one stream")

    # one prepass for all K tests: the prepass stream depends on the data only
    standardizer = estimate_standardizer(streams[0], config)
    if library is not None and needs_table(config.measure):
        library.table_for(config.measure, config.m)

    tasks = [(s, config, library, standardizer) for s in streams]
    results = parallel_map(_profile_task, tasks, workers, auto_chunksize(len(tasks), workers))

    p_values = [p for p, _ in results if p is not None]
    failures = [reason for p, reason in results if p is None]
    if failures:
        logger.warning(
            f"{len(failures)} of {len(streams)} tests hit degenerate fits: {failures[0]}"
        )
    if not p_values:
        raise DegenerateFitError(f"all {len(streams)} tests were degenerate")
    return profile_from_p_values(p_values, config.m, alphas, len(failures))


def streams_for(fitted: FittedModel, seed: SeedSpec, K: int) -> List[BootstrapDrawStream]:
    """K bootstrap streams over one fitted model at seed/k"""
    return [BootstrapDrawStream(fitted, seed.child(k)) for k in range(K)]


# ============================================================
# Boundary decomposition T = Z + a
# ============================================================

@dataclass(frozen=True)
class BoundaryDecomposition:
    """
    t_star = sqrt(m) ||G* - Phi||, z_star = sqrt(m) ||G* - G_n||, a_star = t_star - z_star

    bound = sqrt(m) Phi(-sqrt(n) theta_hat) caps |a_star|.
    """
    m: int
    t_star: float
    z_star: float
    a_star: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return abs(self.a_star) <= self.bound + 1e-12


def decompose_boundary(fitted: FittedModel, m: int, seed: SeedSpec) -> BoundaryDecomposition:
    """Split the statistic of a boundary model using its closed-form bootstrap cdf"""
    if fitted.scenario.variant != Variant.BOUNDARY:
        raise DomainError("decompose_boundary needs a boundary model")
    stream = BootstrapDrawStream(fitted, seed)
    sample = SortedSample.from_draws(stream.take(m))
    root_m = math.sqrt(m)
    floor = -math.sqrt(fitted.scenario.n) * fitted.estimates.theta_hat

    t_star = root_m * ks_distance(sample).value
    z_star = root_m * sup_distance_to(
        sample,
        lambda x: boundary_closed_form_cdf(fitted, x),
        lambda x: boundary_closed_form_left(fitted, x),
        atoms=[floor],
    )
    return BoundaryDecomposition(
        m=m,
        t_star=t_star,
        z_star=z_star,
        a_star=t_star - z_star,
        bound=root_m * float(std_normal_cdf(floor)),
    )
