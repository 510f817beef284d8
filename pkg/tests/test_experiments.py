import numpy as np
import pytest

from src.engines.experiments import (
    MIN_FAN_DRAWS,
    fan_chart,
    figure_preset,
    post_test_bias,
    pretest_contrast,
    run_plan,
    size_power_table,
)
from src.errors import DomainError, EmptyConditioningSetError
from src.models.diagnostic import DiagnosticConfig
from src.models.experiment import CellCheck, ExperimentPlan, ReportKind, SizePowerRow
from src.models.scenario import (
    AR1Scenario,
    BoundaryRegime,
    BoundaryScenario,
    HeavyTailScenario,
    Innovation,
    IVScenario,
    IVStrength,
)
from src.models.seeds import SeedSpec


def _plan(*scenarios, m=20, R=50, K=1, seed=11, **kwargs):
    return ExperimentPlan(
        scenarios=scenarios,
        diagnostic=DiagnosticConfig(m=m),
        K=K,
        R=R,
        seed=SeedSpec(seed),
        **kwargs,
    )


def test_plan_validation():
    with pytest.raises(DomainError):
        _plan()
    with pytest.raises(DomainError):
        _plan(BoundaryScenario(n=50), AR1Scenario(n=50))
    with pytest.raises(DomainError):
        _plan(BoundaryScenario(n=50), R=0)
    with pytest.raises(DomainError):
        _plan(BoundaryScenario(n=50), alphas=(0.05, 1.0))


def test_plan_seeds_are_distinct():
    plan = _plan(BoundaryScenario(n=50))
    assert plan.dataset_seed(0, 3) != plan.test_seed(0, 3)
    assert plan.dataset_seed(0, 3) != plan.dataset_seed(0, 4)


def test_interior_boundary_keeps_size():
    plan = _plan(BoundaryScenario(n=100, theta0=1.0), R=200)
    (row,) = size_power_table(plan)
    assert row.null
    assert row.rate_at(0.05) <= 0.10
    assert row.degenerate_count == 0
    assert not row.failed
    assert row.se_at(0.05) == pytest.approx(
        np.sqrt(row.rate_at(0.05) * (1 - row.rate_at(0.05)) / 200)
    )


def test_boundary_at_zero_is_detected():
    plan = _plan(
        BoundaryScenario(n=100, regime=BoundaryRegime.NEAR_BOUNDARY, c=0.0), m=100, R=60
    )
    (row,) = size_power_table(plan)
    assert not row.null
    assert row.rate_at(0.05) >= 0.6


def test_size_power_is_identical_across_workers():
    plan = _plan(BoundaryScenario(n=60), BoundaryScenario(n=120), R=30, K=3)
    assert size_power_table(plan, workers=1) == size_power_table(plan, workers=2)


def test_row_records():
    (row,) = size_power_table(_plan(BoundaryScenario(n=60), R=10))
    record = row.to_record()
    assert record["R"] == 10
    assert set(record) >= {"rate@0.01", "rate@0.05", "rate@0.1", "se@0.05"}
    with pytest.raises(KeyError):
        row.rate_at(0.2)


def test_cell_check():
    assert CellCheck(observed=0.07, target=0.05, tolerance=0.02, se=0.001).passed
    assert not CellCheck(observed=0.09, target=0.05, tolerance=0.02, se=0.01).passed
    assert CellCheck(observed=0.09, target=0.05, tolerance=0.02, se=0.02).passed


def _row(null, rates, se=(0.01, 0.01), failed=False):
    return SizePowerRow(
        scenario="s", null=null, n=100, m=20, measure="ks", K=1, R=500,
        alphas=(0.01, 0.05), rates=rates, se=se, failed=failed,
    )


def test_rows_carry_cell_verdicts():
    size = _row(True, (0.012, 0.06))
    assert size.check_at(0.05).target == 0.05
    assert size.passed
    assert size.to_record()["pass@0.05"] == 1

    oversized = _row(True, (0.01, 0.12))
    assert not oversized.passed
    assert oversized.to_record()["pass@0.05"] == 0
    assert oversized.to_record()["pass@0.01"] == 1

    power = _row(False, (0.85, 0.9))
    assert power.check_at(0.05).target == 1.0
    assert power.passed
    assert not _row(False, (0.2, 0.5)).passed
    assert not _row(True, (0.01, 0.05), failed=True).passed


def test_plan_outputs():
    with pytest.raises(DomainError):
        _plan(BoundaryScenario(n=50), outputs=())

    plan = _plan(BoundaryScenario(n=60), R=120, outputs=("size_power", "band"))
    report = run_plan(plan)
    (scenario,) = report.scenarios
    assert report.wants(ReportKind.BAND)
    assert not report.wants(ReportKind.PROFILE)
    assert scenario.profile.K == 120
    assert scenario.band.K == 120
    assert report.band_records()[0]["statistic"] == scenario.profile.uniform_band_stat
    assert report.rows == size_power_table(plan)

    small = run_plan(_plan(BoundaryScenario(n=60), R=30, outputs=("profile",)))
    assert small.scenarios[0].band is None
    assert len(small.profile_records()) == small.scenarios[0].profile.alphas.size


# ============================================================
# Post-diagnostic statistics
# ============================================================

def test_post_test_bias_on_valid_model():
    plan = _plan(HeavyTailScenario(n=50, innovation=Innovation.GAUSSIAN), R=100)
    report = post_test_bias(plan)
    assert report.conditioning == "diagnostic"
    assert report.threshold == pytest.approx(1.3581, abs=1e-3)
    assert report.n_unconditional == 100
    assert report.acceptance_rate > 0.8
    assert 0.0 <= report.distance_to_unconditional <= 1.0


def test_post_test_bias_needs_valid_model():
    plan = _plan(AR1Scenario(n=50, regime="local_to_unity", c=0.0))
    with pytest.raises(DomainError):
        post_test_bias(plan)


def test_empty_conditioning_set():
    plan = _plan(HeavyTailScenario(n=50), R=20)
    with pytest.raises(EmptyConditioningSetError):
        post_test_bias(plan, t_threshold=-1.0)


def test_pretest_contrast():
    weak = IVScenario(n=100, strength=IVStrength.WEAK, coefficients=(2.0,))
    report = pretest_contrast(_plan(weak, R=300), f_threshold=10.0)
    assert report.conditioning == "first_stage_f"
    assert report.statistic == "iv_t"
    assert 0 < report.n_conditional < report.n_unconditional == 300
    with pytest.raises(DomainError):
        pretest_contrast(_plan(BoundaryScenario(n=50)))


# ============================================================
# Fan charts
# ============================================================

def test_fan_chart_limits(seed):
    with pytest.raises(DomainError):
        fan_chart(IVScenario(n=100), M=50, B=MIN_FAN_DRAWS, x_grid=[0.0], seed=seed)
    with pytest.raises(DomainError):
        fan_chart(IVScenario(n=100), M=100, B=500, x_grid=[0.0], seed=seed)


def test_fan_chart_bands_separate_weak_from_strong(seed):
    x = np.linspace(-3.0, 3.0, 13)
    strong = fan_chart(IVScenario(n=1000, coefficients=(1.0,)), 100, 1000, x, seed)
    weak_spec, _, _ = figure_preset(IVStrength.WEAK)
    weak = fan_chart(weak_spec, 100, 1000, x, seed)

    assert np.all(np.diff(strong.bands, axis=0) >= 0.0)
    assert np.all(np.diff(weak.bands, axis=0) >= 0.0)
    assert strong.width_at(0.0) <= 0.06
    assert weak.width_at(0.0) > 2.0 * strong.width_at(0.0)
    assert len(strong.to_records()) == 13
    assert set(strong.to_records()[0]) == {"x", "q01", "q10", "q25", "q50", "q75", "q90", "q99"}


def test_figure_preset():
    scenario, M, B = figure_preset()
    assert (scenario.n, scenario.k, scenario.rho_uv) == (1000, 1, 0.9)
    assert (M, B) == (1000, 10_000)
    assert scenario.is_null
    assert not figure_preset("weak")[0].is_null
