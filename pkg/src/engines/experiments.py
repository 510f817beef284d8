"""
Experiment Engine - desk-scale Monte Carlo studies

Size and power tables, the post-diagnostic bias check, the first-stage F
pre-test contrast, fan charts of the bootstrap cdf and the uniform band
statistic of a rejection profile. Every dataset runs from its own
sub-stream and results are reduced in input order, so reruns are
bit-identical for any worker count.
"""

import logging
import time
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.engines.diagnostics import (
    estimate_standardizer,
    profile_from_p_values,
    rejection_profile,
    run_test,
    streams_for,
)
from src.engines.discrepancy import ks_distance
from src.engines.parallel import auto_chunksize, parallel_map
from src.engines.probkernel import kolmogorov_sf
from src.engines.reference import ReferenceLibrary, critical_value, needs_table
from src.engines.scenarios import (
    PostStatistic,
    default_post_statistic,
    first_stage_f,
    post_statistic as compute_post_statistic,
    simulate,
)
from src.engines.streams import BootstrapDrawStream, DirectNormalSource
from src.errors import DegenerateFitError, DomainError, EmptyConditioningSetError
from src.models.diagnostic import DiagnosticConfig, RejectionProfile
from src.models.experiment import (
    DATA_TAG,
    FAN_QUANTILES,
    MAX_DEGENERATE_SHARE,
    TEST_TAG,
    BandDiagnostic,
    ExperimentPlan,
    FanChartData,
    PlanReport,
    PostTestReport,
    ReportKind,
    ScenarioReport,
    SizePowerRow,
    binomial_se,
)
from src.models.measures import SortedSample
from src.models.scenario import IVScenario, IVStrength, ScenarioSpec, Variant
from src.models.seeds import SeedSpec


logger = logging.getLogger(__name__)

MIN_FAN_REALIZATIONS = 100
MIN_FAN_DRAWS = 1_000
MIN_BAND_TESTS = 100

# Literal fan-chart setting: one instrument, n = 1,000, rho_uv = 0.9, M = 1,000
FIGURE_PRESET = {"n": 1_000, "k": 1, "rho_uv": 0.9, "M": 1_000, "B": 10_000}


def _warm_library(library: Optional[ReferenceLibrary], config: DiagnosticConfig) -> None:
    if library is not None and needs_table(config.measure):
        library.table_for(config.measure, config.m)


# ============================================================
# Size and power
# ============================================================

def _dataset_p_values(task) -> Tuple[Optional[np.ndarray], Optional[str]]:
    """K diagnostics on one simulated dataset"""
    plan, s, r, library = task
    fitted = simulate(plan.scenarios[s], plan.dataset_seed(s, r))
    if fitted.is_degenerate:
        return None, fitted.degenerate_reason
    try:
        streams = streams_for(fitted, plan.test_seed(s, r), plan.K)
        standardizer = estimate_standardizer(streams[0], plan.diagnostic)
        p = [run_test(st, plan.diagnostic, library, standardizer).p_value for st in streams]
    except DegenerateFitError as e:
        return None, str(e)
    return np.array(p), None


def _scenario_p_values(
    plan: ExperimentPlan,
    s: int,
    library: Optional[ReferenceLibrary],
    workers: int,
) -> Tuple[List[np.ndarray], int]:
    """p-value sets of the regular datasets of scenario s and the degenerate count"""
    scenario = plan.scenarios[s]
    tasks = [(plan, s, r, library) for r in range(plan.R)]
    results = parallel_map(_dataset_p_values, tasks, workers, auto_chunksize(len(tasks), workers))

    p_sets = [p for p, _ in results if p is not None]
    degenerate = len(results) - len(p_sets)
    if degenerate:
        reason = next(reason for p, reason in results if p is None)
        logger.warning(f"{scenario.label}: {degenerate}/{plan.R} degenerate datasets ({reason})")
    return p_sets, degenerate


def _size_power_row(
    plan: ExperimentPlan, scenario: ScenarioSpec, p_sets: List[np.ndarray], degenerate: int
) -> SizePowerRow:
    failed = degenerate > MAX_DEGENERATE_SHARE * plan.R or not p_sets
    rates, ses = [], []
    for alpha in plan.alphas:
        rate = float(np.mean([np.mean(p <= alpha) for p in p_sets])) if p_sets else 0.0
        rates.append(rate)
        ses.append(binomial_se(rate, len(p_sets)))
    if failed:
        logger.warning(f"Row {scenario.label} failed: {degenerate} degenerate of {plan.R}")
    return SizePowerRow(
        scenario=scenario.label,
        null=scenario.is_null,
        n=scenario.n,
        m=plan.diagnostic.m,
        measure=plan.diagnostic.measure.label,
        K=plan.K,
        R=plan.R,
        alphas=plan.alphas,
        rates=tuple(rates),
        se=tuple(ses),
        degenerate_count=degenerate,
        failed=failed,
    )


def run_plan(
    plan: ExperimentPlan,
    library: Optional[ReferenceLibrary] = None,
    workers: int = 1,
) -> PlanReport:
    """
    Run every scenario of a plan and build the outputs it asks for

    Args:
        plan: Scenarios, diagnostic, R, K, seed and the requested outputs
        library: Reference tables for table-backed measures
        workers: Worker processes; results do not depend on it

    Returns:
        PlanReport with one size/power row per scenario, plus the pooled
        rejection profile (profile, band outputs) and the band diagnostic
        (band output, when at least MIN_BAND_TESTS p-values are pooled)
    """
    _warm_library(library, plan.diagnostic)
    wants_profile = ReportKind.PROFILE in plan.outputs or ReportKind.BAND in plan.outputs
    reports = []
    for s, scenario in enumerate(plan.scenarios):
        started = time.perf_counter()
        p_sets, degenerate = _scenario_p_values(plan, s, library, workers)
        row = _size_power_row(plan, scenario, p_sets, degenerate)

        profile = band = None
        if wants_profile and p_sets:
            profile = profile_from_p_values(
                np.concatenate(p_sets), plan.diagnostic.m, degenerate_count=degenerate
            )
            if ReportKind.BAND in plan.outputs:
                if profile.K >= MIN_BAND_TESTS:
                    band = band_diagnostic(profile)
                else:
                    logger.info(
                        f"{scenario.label}: {profile.K} p-values, band diagnostic skipped"
                    )

        logger.info(
            f"{scenario.label} n={scenario.n} m={plan.diagnostic.m}: "
            f"rates {', '.join(f'{r:.3f}' for r in row.rates)} "
            f"({time.perf_counter() - started:.1f}s)"
        )
        reports.append(ScenarioReport(row, profile, band))
    return PlanReport(plan, tuple(reports))


def size_power_table(
    plan: ExperimentPlan,
    library: Optional[ReferenceLibrary] = None,
    workers: int = 1,
) -> List[SizePowerRow]:
    """
    Rejection rates per scenario over R datasets

    With K > 1 a dataset contributes its rejection fraction over K tests.
    A row is marked failed when more than 1% of its datasets are degenerate.

    Args:
        plan: Scenarios, diagnostic configuration, R, K, seed and alpha grid
        library: Reference tables for table-backed measures
        workers: Worker processes; rows are identical for any value

    Returns:
        One SizePowerRow per scenario, in plan order
    """
    return run_plan(replace(plan, outputs=(ReportKind.SIZE_POWER,)), library, workers).rows


def calibration_profile(
    config: DiagnosticConfig,
    K: int,
    seed: SeedSpec,
    alphas: Optional[Sequence[float]] = None,
    library: Optional[ReferenceLibrary] = None,
    workers: int = 1,
) -> RejectionProfile:
    """Rejection profile of K tests on exact N(0,1) draws"""
    streams = [DirectNormalSource(seed.child(k)) for k in range(K)]
    return rejection_profile(streams, config, alphas, library, workers)


# ============================================================
# Post-diagnostic bias
# ============================================================

def _post_test_task(task) -> Optional[Tuple[float, float]]:
    plan, r, kind, library = task
    fitted = simulate(plan.scenarios[0], plan.dataset_seed(0, r))
    if fitted.is_degenerate:
        return None
    try:
        rho = compute_post_statistic(fitted, kind)
        stream = BootstrapDrawStream(fitted, plan.test_seed(0, r))
        outcome = run_test(stream, plan.diagnostic, library)
    except DegenerateFitError:
        return None
    return rho, outcome.t_star


def _report(
    scenario: ScenarioSpec,
    statistic: str,
    conditioning: str,
    threshold: float,
    conditional: np.ndarray,
    unconditional: np.ndarray,
    degenerate: int,
) -> PostTestReport:
    if conditional.size == 0:
        raise EmptyConditioningSetError(
            f"{scenario.label}: no dataset satisfied the {conditioning} condition at {threshold:g}"
        )
    return PostTestReport(
        scenario=scenario.label,
        statistic=statistic,
        conditioning=conditioning,
        threshold=threshold,
        conditional=conditional,
        unconditional=unconditional,
        distance_to_normal=ks_distance(SortedSample.from_draws(conditional)).value,
        distance_to_unconditional=float(stats.ks_2samp(conditional, unconditional).statistic),
        unconditional_to_normal=ks_distance(SortedSample.from_draws(unconditional)).value,
        degenerate_count=degenerate,
    )


def post_test_bias(
    plan: ExperimentPlan,
    post_statistic: Optional[PostStatistic] = None,
    t_threshold: Optional[float] = None,
    library: Optional[ReferenceLibrary] = None,
    workers: int = 1,
) -> PostTestReport:
    """
    Law of a post-test statistic among datasets the diagnostic does not reject

    The threshold defaults to the (1 - level_alpha) critical value of the
    diagnostic's null law; every dataset is kept unless T* exceeds it.
    """
    if len(plan.scenarios) != 1:
        raise DomainError("post_test_bias runs on a single scenario")
    scenario = plan.scenarios[0]
    if not scenario.is_null:
        raise DomainError(f"{scenario.label} is not a valid specification")
    kind = PostStatistic(post_statistic or default_post_statistic(scenario.variant))

    _warm_library(library, plan.diagnostic)
    if t_threshold is None:
        t_threshold = critical_value(
            plan.diagnostic.measure, plan.diagnostic.level_alpha, library, plan.diagnostic.m
        )

    tasks = [(plan, r, kind, library) for r in range(plan.R)]
    results = parallel_map(_post_test_task, tasks, workers, auto_chunksize(len(tasks), workers))
    pairs = np.array([res for res in results if res is not None], dtype=float).reshape(-1, 2)
    degenerate = plan.R - pairs.shape[0]
    if pairs.shape[0] == 0:
        raise EmptyConditioningSetError(f"{scenario.label}: every dataset was degenerate")

    rho, t_star = pairs[:, 0], pairs[:, 1]
    report = _report(
        scenario, kind.value, "diagnostic", float(t_threshold),
        rho[t_star <= t_threshold], rho, degenerate,
    )
    logger.info(
        f"Post-test {scenario.label}: kept {report.n_conditional}/{report.n_unconditional}, "
        f"distance to Phi {report.distance_to_normal:.4f}, "
        f"to unconditional {report.distance_to_unconditional:.4f}"
    )
    return report


def _pretest_task(task) -> Optional[Tuple[float, float]]:
    plan, r = task
    fitted = simulate(plan.scenarios[0], plan.dataset_seed(0, r))
    if fitted.is_degenerate:
        return None
    return compute_post_statistic(fitted, PostStatistic.IV_T), first_stage_f(fitted)


def pretest_contrast(
    plan: ExperimentPlan,
    f_threshold: float = 10.0,
    workers: int = 1,
) -> PostTestReport:
    """
    IV t-statistic conditioned on a conventional first-stage F > threshold pre-test

    The counterpart of post_test_bias with the pre-test the diagnostic replaces.
    """
    if len(plan.scenarios) != 1 or plan.scenarios[0].variant != Variant.IV:
        raise DomainError("pretest_contrast runs on a single IV scenario")
    scenario = plan.scenarios[0]

    tasks = [(plan, r) for r in range(plan.R)]
    results = parallel_map(_pretest_task, tasks, workers, auto_chunksize(len(tasks), workers))
    pairs = np.array([res for res in results if res is not None], dtype=float).reshape(-1, 2)
    degenerate = plan.R - pairs.shape[0]

    rho, f_stat = pairs[:, 0], pairs[:, 1]
    report = _report(
        scenario, PostStatistic.IV_T.value, "first_stage_f", float(f_threshold),
        rho[f_stat > f_threshold], rho, degenerate,
    )
    logger.info(
        f"F pre-test {scenario.label}: kept {report.n_conditional}/{report.n_unconditional}, "
        f"distance to unconditional {report.distance_to_unconditional:.4f}"
    )
    return report


# ============================================================
# Fan chart
# ============================================================

def _fan_task(task) -> Optional[np.ndarray]:
    scenario, seed, j, B, x_grid = task
    fitted = simulate(scenario, seed.child(j, DATA_TAG))
    if fitted.is_degenerate:
        return None
    try:
        draws = np.sort(BootstrapDrawStream(fitted, seed.child(j, TEST_TAG)).take(B))
    except DegenerateFitError:
        return None
    return np.searchsorted(draws, x_grid, side="right") / B


def fan_chart(
    scenario: ScenarioSpec,
    M: int,
    B: int,
    x_grid: Sequence[float],
    seed: SeedSpec,
    workers: int = 1,
    levels: Sequence[float] = FAN_QUANTILES,
) -> FanChartData:
    """Quantile bands over M datasets of the bootstrap cdf, each from B draws"""
    if M < MIN_FAN_REALIZATIONS:
        raise DomainError(f"fan charts need M >= {MIN_FAN_REALIZATIONS}, got {M}")
    if B < MIN_FAN_DRAWS:
        raise DomainError(f"fan charts need B >= {MIN_FAN_DRAWS}, got {B}")
    x = np.sort(np.asarray(x_grid, dtype=float))

    tasks = [(scenario, seed, j, B, x) for j in range(M)]
    results = parallel_map(_fan_task, tasks, workers, auto_chunksize(len(tasks), workers))
    curves = [c for c in results if c is not None]
    if not curves:
        raise DegenerateFitError(f"{scenario.label}: every fan-chart dataset was degenerate")

    bands = np.quantile(np.vstack(curves), list(levels), axis=0)
    return FanChartData(
        x_grid=x,
        levels=tuple(levels),
        bands=bands,
        M=M,
        B=B,
        scenario=scenario.label,
        degenerate_count=M - len(curves),
    )


def figure_preset(strength: IVStrength = IVStrength.STRONG) -> Tuple[IVScenario, int, int]:
    """IV scenario, M and B of the literal fan chart; weak uses irrelevant instruments"""
    strength = IVStrength(strength)
    coefficients = (1.0,) if strength == IVStrength.STRONG else (0.0,)
    scenario = IVScenario(
        n=FIGURE_PRESET["n"],
        k=FIGURE_PRESET["k"],
        rho_uv=FIGURE_PRESET["rho_uv"],
        strength=strength,
        coefficients=coefficients,
    )
    return scenario, FIGURE_PRESET["M"], FIGURE_PRESET["B"]


# ============================================================
# Band diagnostic
# ============================================================

def band_diagnostic(profile: RejectionProfile) -> BandDiagnostic:
    """sqrt(K) sup |pi_hat - alpha| and 1 - H of it; descriptive only"""
    if profile.K < MIN_BAND_TESTS:
        raise DomainError(f"band diagnostic needs K >= {MIN_BAND_TESTS}, got {profile.K}")
    stat = profile.uniform_band_stat
    return BandDiagnostic(statistic=stat, p_value=kolmogorov_sf(stat), K=profile.K)
