import math

import numpy as np
import pytest
from scipy import stats

from src.data.table_cache import TableCache
from src.engines.diagnostics import (
    LogRule,
    PowerRule,
    Standardizer,
    choose_m,
    decompose_boundary,
    diagnose_draws,
    estimate_standardizer,
    parse_rule,
    presumed_rate,
    profile_from_p_values,
    run_test,
    streams_for,
)
from src.engines.discrepancy import sup_distance_to
from src.engines.experiments import band_diagnostic, calibration_profile
from src.engines.probkernel import std_normal_quantile
from src.engines.reference import (
    ReferenceLibrary,
    critical_value,
    reference_p_value,
)
from src.engines.scenarios import (
    boundary_closed_form_cdf,
    boundary_closed_form_left,
    simulate,
)
from src.engines.streams import BootstrapDrawStream, DirectNormalSource
from src.errors import DomainError, MissingReferenceTableError
from src.models.diagnostic import DiagnosticConfig, ReferenceKind, Standardization
from src.models.measures import DiscrepancyMeasure, SortedSample
from src.models.scenario import BoundaryRegime, BoundaryScenario
from src.models.seeds import TABLE_STREAM, SeedSpec


# ============================================================
# Choice of m
# ============================================================

@pytest.mark.parametrize(
    "n,rule,expected",
    [
        (1000, LogRule(), 21),
        (400, PowerRule(0.5), 20),
        (1000, PowerRule(0.5), 32),
        (8, LogRule(), 10),
    ],
)
def test_choose_m(n, rule, expected):
    assert choose_m(n, rule) == expected


def test_choose_m_rejects_small_samples():
    with pytest.raises(DomainError):
        choose_m(7, LogRule())


def test_parse_rule_and_rate():
    assert parse_rule("log") == LogRule(3)
    assert parse_rule("log:4") == LogRule(4)
    assert parse_rule("power:0.4") == PowerRule(0.4)
    assert presumed_rate(LogRule()) == 0.0
    assert presumed_rate(PowerRule(0.5)) == 0.25
    for text in ("cube", "power:1.5", "log:x"):
        with pytest.raises(DomainError):
            parse_rule(text)


# ============================================================
# Single test
# ============================================================

def test_config_validation():
    assert DiagnosticConfig(m=20).prepass_M == 10_000
    assert DiagnosticConfig(m=500).prepass_M == 50_000
    with pytest.raises(DomainError):
        DiagnosticConfig(m=0)
    with pytest.raises(DomainError):
        DiagnosticConfig(m=20, level_alpha=1.0)
    with pytest.raises(DomainError):
        DiagnosticConfig(m=20, standardization=Standardization.SCALE, prepass_M=100)


def test_equioscillating_draws_do_not_reject():
    m = 20
    i = np.arange(1, m + 1)
    draws = std_normal_quantile((2 * i - 1) / (2 * m))
    outcome = diagnose_draws(draws, DiagnosticConfig(m=m))
    assert outcome.p_value > 0.99
    assert outcome.reference == ReferenceKind.KOLMOGOROV_SERIES
    assert outcome.t_star == pytest.approx(math.sqrt(m) / (2 * m))
    assert not outcome.rejects(0.05)


def test_far_draws_reject(rng):
    config = DiagnosticConfig(m=50)
    outcome = diagnose_draws(rng.standard_normal(50) + 3.0, config)
    assert outcome.p_value < 1e-6
    assert outcome.rejects(0.01)


def test_wrong_draw_count(rng):
    with pytest.raises(DomainError):
        diagnose_draws(rng.standard_normal(5), DiagnosticConfig(m=20))


def test_signed_measure_uses_one_sided_law(rng):
    config = DiagnosticConfig(m=30, measure=DiscrepancyMeasure.parse("sks+"))
    outcome = diagnose_draws(rng.standard_normal(30), config)
    assert outcome.reference == ReferenceKind.ONE_SIDED_EXACT
    assert outcome.p_value == pytest.approx(math.exp(-2.0 * outcome.t_star**2))


def test_table_measure_reads_library(rng, library):
    config = DiagnosticConfig(m=20, measure=DiscrepancyMeasure.parse("cvm"))
    outcome = diagnose_draws(rng.standard_normal(20), config, library)
    assert outcome.reference == ReferenceKind.SIMULATED_TABLE
    assert outcome.table_id.startswith("cvm-m1000-r10000")
    assert 0.0 <= outcome.p_value <= 1.0


# ============================================================
# Standardization
# ============================================================

def test_standardizer(seed):
    assert Standardizer(1.0, 2.0).apply(np.array([3.0]))[0] == 1.0
    source = DirectNormalSource(seed)
    assert estimate_standardizer(source, DiagnosticConfig(m=20)) == Standardizer()
    config = DiagnosticConfig(m=20, standardization=Standardization.LOCATION_SCALE)
    fitted = estimate_standardizer(source, config)
    assert abs(fitted.location) < 0.05
    assert fitted.scale == pytest.approx(1.0, abs=0.05)
    # the prepass never consumes the test stream
    assert source.position == 0


def test_prepass_shared_across_streams(seed):
    fitted = simulate(BoundaryScenario(n=60), seed)
    config = DiagnosticConfig(m=20, standardization=Standardization.SCALE)
    a, b = streams_for(fitted, seed.child(1), 2)
    assert estimate_standardizer(a, config) == estimate_standardizer(b, config)
    assert run_test(a, config).m == 20
    assert a.position == 20


# ============================================================
# Rejection profiles
# ============================================================

def test_profile_from_p_values():
    profile = profile_from_p_values([0.01, 0.02, 0.5, 0.9], m=20, alphas=[0.05])
    assert profile.pi_hat[0] == 0.5
    assert profile.uniform_band_stat == pytest.approx(0.9)
    assert profile.rate_at(0.05) == 0.5
    assert profile.pointwise_se()[0] == pytest.approx(0.25)
    with pytest.raises(DomainError):
        profile_from_p_values([0.5], m=20, alphas=[0.0])
    with pytest.raises(DomainError):
        profile_from_p_values([], m=20)


def test_band_diagnostic_on_exact_grid():
    p = np.arange(1, 101) / 100
    profile = profile_from_p_values(p, m=20, alphas=np.arange(1, 11) / 100)
    band = band_diagnostic(profile)
    assert band.statistic == 0.0
    assert band.p_value == 1.0
    with pytest.raises(DomainError):
        band_diagnostic(profile_from_p_values(p[:50], m=20))


def test_null_size_on_exact_normal_draws(seed):
    profile = calibration_profile(DiagnosticConfig(m=100), K=2000, seed=seed, alphas=[0.05])
    assert 0.03 <= profile.rate_at(0.05) <= 0.07


def test_ks_statistics_follow_the_finite_m_law(seed):
    config = DiagnosticConfig(m=100)
    t = np.array([run_test(DirectNormalSource(seed.child(k)), config).t_star for k in range(2000)])
    exact = stats.kstwo.sf(t / math.sqrt(100), 100)
    assert stats.kstest(exact, "uniform").pvalue > 1e-3


def test_ks_p_values_are_uniform(seed):
    profile = calibration_profile(DiagnosticConfig(m=1000), K=2000, seed=seed)
    assert stats.kstest(profile.p_values, "uniform").pvalue > 1e-3


@pytest.mark.slow
def test_cvm_p_values_are_uniform(seed, tmp_path):
    library = ReferenceLibrary(
        cache=TableCache(tmp_path),
        m_ref=1_000,
        reps=100_000,
        seed=SeedSpec(8, (TABLE_STREAM,)),
        workers=4,
    )
    config = DiagnosticConfig(m=100, measure=DiscrepancyMeasure.parse("cvm"))
    profile = calibration_profile(config, K=2000, seed=seed, library=library, workers=4)
    assert 0.03 <= profile.rate_at(0.05) <= 0.07
    assert stats.kstest(profile.p_values, "uniform").pvalue > 1e-3


def test_profile_is_identical_across_workers(seed):
    config = DiagnosticConfig(m=30)
    one = calibration_profile(config, K=40, seed=seed, workers=1)
    two = calibration_profile(config, K=40, seed=seed, workers=2)
    assert np.array_equal(one.p_values, two.p_values)
    assert np.array_equal(one.pi_hat, two.pi_hat)


# ============================================================
# Boundary decomposition
# ============================================================

def test_boundary_decomposition_within_bound(seed):
    spec = BoundaryScenario(n=100, regime=BoundaryRegime.NEAR_BOUNDARY, c=0.0)
    for r in range(5):
        fitted = simulate(spec, seed.child(r))
        parts = decompose_boundary(fitted, 200, seed.child(r, 1))
        assert parts.within_bound
        assert parts.a_star == pytest.approx(parts.t_star - parts.z_star)


def test_boundary_closed_form_matches_draws(seed):
    spec = BoundaryScenario(n=100, regime=BoundaryRegime.NEAR_BOUNDARY, c=0.5)
    fitted = simulate(spec, seed)
    sample = SortedSample.from_draws(BootstrapDrawStream(fitted, seed.child(1)).take(100_000))
    floor = -math.sqrt(100) * fitted.estimates.theta_hat
    distance = sup_distance_to(
        sample,
        lambda x: boundary_closed_form_cdf(fitted, x),
        lambda x: boundary_closed_form_left(fitted, x),
        atoms=[floor],
    )
    assert distance < 0.0066


# ============================================================
# Reference laws
# ============================================================

def test_closed_form_critical_values():
    assert critical_value(DiscrepancyMeasure.ks(), 0.05) == pytest.approx(1.3581, abs=1e-3)
    plus = critical_value(DiscrepancyMeasure.parse("sks+"), 0.05)
    assert plus == pytest.approx(math.sqrt(-math.log(0.05) / 2.0), rel=1e-8)


def test_simulated_critical_values(library):
    assert critical_value(DiscrepancyMeasure.parse("cvm"), 0.05, library) == pytest.approx(
        0.679, abs=0.03
    )
    assert critical_value(DiscrepancyMeasure.parse("ad"), 0.05, library) == pytest.approx(
        1.5786, abs=0.05
    )


def test_missing_table(tmp_path):
    library = ReferenceLibrary(
        cache=TableCache(tmp_path), m_ref=1000, reps=10_000, allow_build=False
    )
    with pytest.raises(MissingReferenceTableError):
        library.table_for(DiscrepancyMeasure.parse("cvm"), 20)
    with pytest.raises(MissingReferenceTableError):
        reference_p_value(DiscrepancyMeasure.parse("ad"), 1.0, 20)


def test_moment_table_is_finite_m(tmp_path):
    library = ReferenceLibrary(cache=TableCache(tmp_path), m_ref=1000, reps=10_000)
    measure = DiscrepancyMeasure.moment()
    assert library.m_ref_for(measure, 20) == 20
    table = library.table_for(measure, 20)
    assert table.m_ref == 20
    assert table.replications == 10_000
    # written through to the cache and reloaded by a fresh library
    fresh = ReferenceLibrary(
        cache=TableCache(tmp_path), m_ref=1000, reps=10_000, allow_build=False
    )
    assert np.array_equal(fresh.table_for(measure, 20).statistics, table.statistics)
    with pytest.raises(DomainError):
        critical_value(measure, 0.05, library)
