import math

import numpy as np
import pytest

from src.engines.scenarios import (
    PostStatistic,
    _ar1_path,
    boundary_closed_form_d,
    default_post_statistic,
    first_stage_f,
    iv_design,
    model_for,
    original_statistic,
    post_statistic,
    simulate,
)
from src.engines.streams import (
    BLOCK_SIZE,
    ArraySource,
    BootstrapDrawStream,
    DirectNormalSource,
)
from src.engines.discrepancy import ks_distance
from src.engines.probkernel import std_normal_cdf
from src.errors import DegenerateFitError, DomainError
from src.models.scenario import (
    AR1Regime,
    AR1Scenario,
    BoundaryRegime,
    BoundaryScenario,
    DeltaRegime,
    DeltaScenario,
    FittedModel,
    HeavyTailScenario,
    Innovation,
    IVScenario,
    IVStrength,
    Variant,
    build_scenario,
)
from src.models.measures import SortedSample


# ============================================================
# Scenarios
# ============================================================

def test_iv_design_is_orthonormal(seed):
    z = iv_design(seed, 200, 3)
    assert z.shape == (200, 3)
    assert np.allclose(z.T @ z / 200, np.eye(3), atol=1e-12)
    assert not z.flags.writeable
    # shared by every dataset under the master seed
    assert iv_design(seed.child(4, 2), 200, 3) is z


def test_simulation_is_deterministic(seed):
    spec = IVScenario(n=100)
    first = simulate(spec, seed.child(0))
    assert simulate(spec, seed.child(0)).data_digest == first.data_digest
    assert simulate(spec, seed.child(1)).data_digest != first.data_digest


def test_strong_iv_first_stage_and_draws(seed):
    fitted = simulate(IVScenario(n=1000, coefficients=(1.0,)), seed)
    assert first_stage_f(fitted) > 500.0
    draws = model_for(Variant.IV).draws(fitted, seed.child(9).generator(), 5000)
    assert 0.9 < np.std(draws) < 1.1
    assert abs(np.mean(draws)) < 0.1


def test_weak_iv_scales_coefficients():
    spec = IVScenario(n=400, strength=IVStrength.WEAK, coefficients=(2.0,))
    assert spec.pi[0] == pytest.approx(0.1)
    assert spec.is_null is False
    assert IVScenario(n=400, coefficients=(0.0,)).is_null is False


def test_nonparametric_iv_draws_are_finite(seed):
    spec = build_scenario("iv", n=150, k=2, coefficients=[0.8, 0.5], scheme="nonparametric")
    fitted = simulate(spec, seed)
    draws = model_for(Variant.IV).draws(fitted, seed.child(3).generator(), 300)
    assert draws.shape == (300,)
    assert np.all(np.isfinite(draws))


def test_ar1_path_matches_recursion(rng):
    eps = rng.standard_normal((3, 50))
    alpha, y0 = 0.7, 1.5
    expected = np.empty_like(eps)
    for row in range(3):
        prev = y0
        for t in range(50):
            prev = alpha * prev + eps[row, t]
            expected[row, t] = prev
    assert np.allclose(_ar1_path(alpha, eps, y0), expected, atol=1e-12)


def test_ar1_stationary_estimate(seed):
    fitted = simulate(AR1Scenario(n=2000, alpha0=0.5), seed)
    assert fitted.estimates.alpha_hat == pytest.approx(0.5, abs=0.1)
    assert abs(np.mean(fitted.estimates.residuals)) < 1e-12
    draws = model_for(Variant.AR1).draws(fitted, seed.child(2).generator(), 400)
    assert 0.8 < np.std(draws) < 1.2


def test_ar1_local_to_unity():
    spec = AR1Scenario(n=200, regime=AR1Regime.LOCAL_TO_UNITY, c=-5.0)
    assert spec.true_alpha == pytest.approx(1.0 - 5.0 / 200)
    assert not spec.is_null


def test_boundary_draws_respect_floor(seed):
    spec = BoundaryScenario(n=100, regime=BoundaryRegime.NEAR_BOUNDARY, c=0.0)
    fitted = simulate(spec, seed)
    floor = -math.sqrt(100) * fitted.estimates.theta_hat
    draws = model_for(Variant.BOUNDARY).draws(fitted, seed.child(1).generator(), 2000)
    assert np.all(draws >= floor)
    assert fitted.estimates.theta_hat >= 0.0
    d = boundary_closed_form_d(fitted)
    assert d.value == pytest.approx(std_normal_cdf(floor))


def test_boundary_interior_is_nearly_regular(seed):
    fitted = simulate(BoundaryScenario(n=100, theta0=1.0), seed)
    assert boundary_closed_form_d(fitted).value < 1e-6
    with pytest.raises(DomainError):
        boundary_closed_form_d(simulate(IVScenario(n=100), seed))


@pytest.mark.parametrize("innovation", [Innovation.GAUSSIAN, Innovation.STUDENT_T])
def test_heavy_tail_finite_variance_scale(seed, innovation):
    fitted = simulate(HeavyTailScenario(n=20_000, innovation=innovation), seed)
    assert fitted.estimates.sigma_hat == pytest.approx(1.0, abs=0.1)


def test_heavy_tail_wild_draws(seed):
    spec = build_scenario("heavytail", n=60, scheme="wild")
    fitted = simulate(spec, seed)
    draws = model_for(Variant.HEAVY_TAIL).draws(fitted, seed.child(5).generator(), 1000)
    assert 0.8 < np.std(draws) < 1.2


@pytest.mark.slow
@pytest.mark.parametrize("regime", ["finite_variance", "stable"])
def test_wild_draws_match_conditional_variance(seed, regime):
    spec = build_scenario("heavytail", n=200, regime=regime, scheme="wild")
    fitted = simulate(spec, seed)
    est = fitted.estimates
    draws = BootstrapDrawStream(fitted, seed.child(6)).take(100_000)
    # theta* - theta_hat recovered from the studentized draws
    shifts = draws * est.sigma_hat / math.sqrt(spec.n)
    expected = np.sum(est.residuals**2) / spec.n**2
    assert np.var(shifts) == pytest.approx(expected, rel=0.02)
    assert abs(np.mean(draws)) < 0.015


@pytest.mark.slow
def test_strong_iv_draws_are_close_to_normal(seed):
    fitted = simulate(IVScenario(n=10_000, coefficients=(1.0,)), seed)
    draws = BootstrapDrawStream(fitted, seed.child(7)).take(100_000)
    assert ks_distance(SortedSample.from_draws(draws)).value < 0.02


@pytest.mark.slow
def test_regular_delta_draws_are_close_to_normal(seed):
    fitted = simulate(DeltaScenario(n=10_000, theta0=1.0), seed)
    draws = BootstrapDrawStream(fitted, seed.child(8)).take(100_000)
    assert ks_distance(SortedSample.from_draws(draws)).value < 0.02


def test_delta_scenarios(seed):
    near = DeltaScenario(n=400, regime=DeltaRegime.NEAR_SINGULAR, c=2.0)
    assert near.true_theta == pytest.approx(2.0 / (2.0 * 20.0))
    fitted = simulate(DeltaScenario(n=400, theta0=1.0), seed)
    assert fitted.estimates.tau_hat == pytest.approx(fitted.estimates.theta_hat**2)
    assert math.isfinite(original_statistic(fitted))


@pytest.mark.parametrize(
    "variant,params",
    [
        ("iv", {"n": 5}),
        ("iv", {"n": 100, "k": 2, "coefficients": [1.0]}),
        ("iv", {"n": 100, "rho_uv": 1.0}),
        ("iv", {"n": 100, "foo": 1}),
        ("ar1", {"n": 100, "alpha0": 1.0}),
        ("boundary", {"n": 100, "theta0": 0.0}),
        ("heavytail", {"n": 100, "df": 3.0}),
        ("heavytail", {"n": 100, "regime": "stable", "tail_index": 2.0}),
        ("delta", {"n": 100, "theta0": 0.0}),
        ("probit", {"n": 100}),
    ],
)
def test_invalid_scenarios(variant, params):
    with pytest.raises(DomainError):
        build_scenario(variant, **params)


def test_degenerate_fit_refuses_statistics(seed):
    spec = IVScenario(n=100)
    fitted = FittedModel(spec, "0" * 64, None, degenerate_reason="first stage pi_hat = 0")
    assert fitted.is_degenerate
    with pytest.raises(DegenerateFitError):
        original_statistic(fitted)
    with pytest.raises(DegenerateFitError):
        BootstrapDrawStream(fitted, seed)
    assert first_stage_f(fitted) == 0.0


def test_post_statistics(seed):
    ar1 = simulate(AR1Scenario(n=100), seed)
    iv = simulate(IVScenario(n=100), seed)
    assert default_post_statistic(Variant.IV) == PostStatistic.IV_T
    assert default_post_statistic(Variant.DELTA) == PostStatistic.MEAN_T
    assert post_statistic(iv, PostStatistic.IV_T) == original_statistic(iv)
    with pytest.raises(DomainError):
        post_statistic(ar1, PostStatistic.IV_T)
    with pytest.raises(DomainError):
        post_statistic(iv, PostStatistic.MEAN_T)
    with pytest.raises(DomainError):
        first_stage_f(ar1)


# ============================================================
# Streams
# ============================================================

def test_stream_is_chunking_invariant(seed):
    fitted = simulate(HeavyTailScenario(n=40), seed)
    whole = BootstrapDrawStream(fitted, seed.child(7)).take(1000)
    pieces = BootstrapDrawStream(fitted, seed.child(7))
    parts = [pieces.take(3), pieces.take(600), np.array([pieces.draw()]), pieces.take(396)]
    assert np.array_equal(np.concatenate(parts), whole)
    assert pieces.position == 1000


def test_stream_reset_replays(seed):
    stream = DirectNormalSource(seed)
    first = stream.take(300)
    stream.reset()
    assert np.array_equal(stream.take(300), first)


def test_direct_normal_blocks(seed):
    stream = DirectNormalSource(seed)
    values = stream.take(2 * BLOCK_SIZE)
    assert np.array_equal(values[:BLOCK_SIZE], seed.child(0).generator().standard_normal(256))
    assert np.array_equal(values[BLOCK_SIZE:], seed.child(1).generator().standard_normal(256))


def test_prepass_is_shared_per_dataset(seed):
    fitted = simulate(BoundaryScenario(n=50), seed)
    a = BootstrapDrawStream(fitted, seed.child(1)).prepass_source()
    b = BootstrapDrawStream(fitted, seed.child(2)).prepass_source()
    assert a.seed == b.seed
    assert np.array_equal(a.take(20), b.take(20))


def test_array_source():
    source = ArraySource([0.1, 0.2, 0.3], label="pool")
    assert np.array_equal(source.take(2), [0.1, 0.2])
    with pytest.raises(DomainError):
        source.take(2)
    with pytest.raises(DomainError):
        source.take(-1)
    with pytest.raises(DomainError):
        source.prepass_source()
