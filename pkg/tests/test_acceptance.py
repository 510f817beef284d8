"""Desk-scale Monte Carlo checks; run with `pytest -m slow`"""

import numpy as np
import pytest

from src.data.results_store import ResultTable, RunManifest, emit_results
from src.engines.diagnostics import profile_from_p_values
from src.engines.experiments import calibration_profile, post_test_bias, size_power_table
from src.engines.probkernel import kolmogorov_quantile
from src.engines.reference import build_reference_table
from src.models.diagnostic import DiagnosticConfig
from src.models.experiment import ExperimentPlan
from src.models.measures import DiscrepancyMeasure
from src.models.scenario import (
    AR1Regime,
    AR1Scenario,
    BoundaryRegime,
    BoundaryScenario,
    DeltaRegime,
    DeltaScenario,
    HeavyTailRegime,
    HeavyTailScenario,
    IVScenario,
    IVStrength,
)
from src.models.seeds import SeedSpec


pytestmark = pytest.mark.slow


def test_kolmogorov_law_percentile():
    table = build_reference_table(
        DiscrepancyMeasure.ks(), 10_000, 100_000, SeedSpec(101), workers=4
    )
    assert table.quantile(0.95) == pytest.approx(kolmogorov_quantile(0.95), abs=0.01)


@pytest.mark.parametrize(
    "scenario",
    [IVScenario(n=1000, coefficients=(1.0,), rho_uv=0.9), AR1Scenario(n=1000, alpha0=0.5)],
)
def test_model_level_size(scenario):
    plan = ExperimentPlan(
        scenarios=(scenario,), diagnostic=DiagnosticConfig(m=20), R=1000, seed=SeedSpec(202)
    )
    (row,) = size_power_table(plan, workers=4)
    assert abs(row.rate_at(0.05) - 0.05) <= 0.03


def _rows_by_m(scenario, ms, R, seed):
    rows = {}
    for m in ms:
        plan = ExperimentPlan(
            scenarios=(scenario,), diagnostic=DiagnosticConfig(m=m), R=R, seed=seed
        )
        (rows[m],) = size_power_table(plan, workers=4)
    return rows


@pytest.mark.parametrize(
    "scenario, floor",
    [
        (BoundaryScenario(n=1000, regime=BoundaryRegime.NEAR_BOUNDARY, c=0.0), 0.7),
        (DeltaScenario(n=1000, regime=DeltaRegime.NEAR_SINGULAR, c=0.0), 0.85),
        (IVScenario(n=1000, strength=IVStrength.WEAK, coefficients=(0.0,)), 0.5),
        (AR1Scenario(n=1000, regime=AR1Regime.LOCAL_TO_UNITY, c=0.0), 0.25),
    ],
    ids=lambda v: v.label if hasattr(v, "label") else None,
)
def test_power_grows_with_m(scenario, floor):
    rows = _rows_by_m(scenario, (10, 50), R=500, seed=SeedSpec(303))
    low, high = rows[10], rows[50]
    assert high.rate_at(0.05) >= floor
    spread = 2.0 * np.hypot(low.se_at(0.05), high.se_at(0.05))
    assert high.rate_at(0.05) - low.rate_at(0.05) > spread


def test_stable_tails_need_large_m():
    scenario = HeavyTailScenario(n=1000, regime=HeavyTailRegime.STABLE, tail_index=1.5)
    rows = _rows_by_m(scenario, (20, 10_000), R=200, seed=SeedSpec(313))
    small, large = rows[20], rows[10_000]
    assert small.rate_at(0.05) <= 0.1
    assert large.rate_at(0.05) >= small.rate_at(0.05) + 0.1


def test_no_post_test_bias():
    plan = ExperimentPlan(
        scenarios=(IVScenario(n=1000, coefficients=(1.0,), rho_uv=0.9),),
        diagnostic=DiagnosticConfig(m=20),
        R=4000,
        seed=SeedSpec(404),
    )
    report = post_test_bias(plan, workers=4)
    assert report.distance_to_normal < 0.035
    assert report.distance_to_unconditional < 0.03


def test_uniform_band_under_the_null():
    config = DiagnosticConfig(m=400)
    limit = kolmogorov_quantile(0.999)
    inside = 0
    for rep in range(200):
        profile = calibration_profile(config, K=2000, seed=SeedSpec(505, (rep,)), workers=4)
        inside += profile.uniform_band_stat < limit
    assert inside >= 198


def _emit_size_power(plan, workers, out):
    rows = size_power_table(plan, workers=workers)
    manifest = RunManifest(config={}, master_seed=plan.seed.master_seed, workers=workers,
                           wall_time=0.0)
    return emit_results([ResultTable("size_power", [r.to_record() for r in rows])], out, manifest)


@pytest.mark.parametrize("workers", [4, 16])
def test_size_power_csv_is_identical_for_any_worker_count(tmp_path, workers):
    plan = ExperimentPlan(
        scenarios=(BoundaryScenario(n=400), BoundaryScenario(n=1000)),
        diagnostic=DiagnosticConfig(m=20),
        K=5,
        R=200,
        seed=SeedSpec(606),
    )
    serial = _emit_size_power(plan, 1, tmp_path / "serial")
    parallel = _emit_size_power(plan, workers, tmp_path / "parallel")
    assert parallel.tables == serial.tables
    csv_bytes = (tmp_path / "serial" / "size_power.csv").read_bytes()
    assert (tmp_path / "parallel" / "size_power.csv").read_bytes() == csv_bytes


def test_profile_from_uniform_p_values_is_calibrated(rng):
    p = rng.uniform(size=20_000)
    profile = profile_from_p_values(p, m=20)
    assert profile.uniform_band_stat < kolmogorov_quantile(0.999)
