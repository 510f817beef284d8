"""
Experiment Models - Monte Carlo plans and their reports
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import DomainError, EmptyConditioningSetError
from src.models.diagnostic import DiagnosticConfig, RejectionProfile
from src.models.scenario import ScenarioSpec
from src.models.seeds import SeedSpec


DEFAULT_TABLE_ALPHAS: Tuple[float, ...] = (0.01, 0.05, 0.10)
FAN_QUANTILES: Tuple[float, ...] = (0.01, 0.10, 0.25, 0.50, 0.75, 0.90, 0.99)

# Largest share of degenerate datasets a row may absorb
MAX_DEGENERATE_SHARE = 0.01

# Cell targets: alpha for a valid scenario, 1 for an invalid one
SIZE_TOLERANCE = 0.03
POWER_TOLERANCE = 0.2

# Sub-stream tags below (scenario, dataset)
DATA_TAG = 0
TEST_TAG = 1


class ReportKind(str, Enum):
    SIZE_POWER = "size_power"
    PROFILE = "profile"
    BAND = "band"


@dataclass(frozen=True)
class ExperimentPlan:
    """R datasets per scenario, K diagnostics per dataset"""
    scenarios: Tuple[ScenarioSpec, ...]
    diagnostic: DiagnosticConfig
    K: int = 1
    R: int = 500
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0))
    alphas: Tuple[float, ...] = DEFAULT_TABLE_ALPHAS
    outputs: Tuple[ReportKind, ...] = (ReportKind.SIZE_POWER,)

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "outputs", tuple(ReportKind(o) for o in self.outputs))
        if not self.scenarios:
            raise DomainError("a plan needs at least one scenario")
        if self.R < 1 or self.K < 1:
            raise DomainError(f"R and K must be >= 1, got R={self.R}, K={self.K}")
        families = {s.variant for s in self.scenarios}
        if len(families) > 1:
            names = ", ".join(sorted(v.value for v in families))
            raise DomainError(f"one plan covers one scenario family, got {names}")
        if any(not 0.0 < a < 1.0 for a in self.alphas):
            raise DomainError("alphas must lie in (0, 1)")
        if not self.outputs:
            raise DomainError("a plan needs at least one output")

    def dataset_seed(self, scenario_index: int, dataset: int) -> SeedSpec:
        return self.seed.child(scenario_index, dataset, DATA_TAG)

    def test_seed(self, scenario_index: int, dataset: int) -> SeedSpec:
        return self.seed.child(scenario_index, dataset, TEST_TAG)


@dataclass(frozen=True)
class SizePowerRow:
    """Rejection rates of one scenario with their Monte Carlo standard errors"""
    scenario: str
    null: bool
    n: int
    m: int
    measure: str
    K: int
    R: int
    alphas: Tuple[float, ...]
    rates: Tuple[float, ...]
    se: Tuple[float, ...]
    degenerate_count: int = 0
    failed: bool = False

    def __post_init__(self):
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise DomainError(f"rates must lie in [0, 1], got {self.rates}")

    def rate_at(self, alpha: float) -> float:
        return self.rates[self._index(alpha)]

    def se_at(self, alpha: float) -> float:
        return self.se[self._index(alpha)]

    def _index(self, alpha: float) -> int:
        for i, a in enumerate(self.alphas):
            if math.isclose(a, alpha, abs_tol=1e-12):
                return i
        raise KeyError(f"alpha {alpha} is not in the row grid {self.alphas}")

    def check_at(self, alpha: float) -> "CellCheck":
        i = self._index(alpha)
        if self.null:
            return CellCheck(self.rates[i], self.alphas[i], SIZE_TOLERANCE, self.se[i])
        return CellCheck(self.rates[i], 1.0, POWER_TOLERANCE, self.se[i])

    @property
    def passed(self) -> bool:
        return not self.failed and all(self.check_at(a).passed for a in self.alphas)

    def to_record(self) -> Dict[str, object]:
        record: Dict[str, object] = {
            "scenario": self.scenario,
            "null": int(self.null),
            "n": self.n,
            "m": self.m,
            "measure": self.measure,
            "K": self.K,
            "R": self.R,
            "degenerate": self.degenerate_count,
            "failed": int(self.failed),
        }
        for a, r, s in zip(self.alphas, self.rates, self.se):
            record[f"rate@{a:g}"] = r
            record[f"se@{a:g}"] = s
            record[f"pass@{a:g}"] = int(self.check_at(a).passed)
        return record


def binomial_se(rate: float, count: int) -> float:
    """sqrt(rate (1 - rate) / count)"""
    return math.sqrt(rate * (1.0 - rate) / count) if count > 0 else float("nan")


@dataclass(frozen=True)
class CellCheck:
    """A table cell against its target: passes if |obs - target| <= max(tol, 3 se)"""
    observed: float
    target: float
    tolerance: float
    se: float

    @property
    def passed(self) -> bool:
        return abs(self.observed - self.target) <= max(self.tolerance, 3.0 * self.se)


@dataclass(frozen=True, eq=False)
class FanChartData:
    """Per-x quantile bands of M realizations of the bootstrap cdf"""
    x_grid: np.ndarray
    levels: Tuple[float, ...]
    bands: np.ndarray         # len(levels) x len(x_grid)
    M: int
    B: int
    scenario: str = ""
    degenerate_count: int = 0

    def band(self, level: float) -> np.ndarray:
        for i, q in enumerate(self.levels):
            if math.isclose(q, level, abs_tol=1e-12):
                return self.bands[i]
        raise KeyError(f"no band at level {level}")

    def width_at(self, x: float, lower: float = 0.10, upper: float = 0.90) -> float:
        """band(upper) - band(lower) at the grid point nearest x"""
        j = int(np.argmin(np.abs(self.x_grid - x)))
        return float(self.band(upper)[j] - self.band(lower)[j])

    def to_records(self) -> List[Dict[str, float]]:
        names = [f"q{round(q * 100):02d}" for q in self.levels]
        return [
            {"x": float(x), **{name: float(self.bands[i, j]) for i, name in enumerate(names)}}
            for j, x in enumerate(self.x_grid)
        ]


@dataclass(frozen=True, eq=False)
class PostTestReport:
    """
    Law of a statistic after conditioning on a pre-test outcome

    conditioning is "diagnostic" (keep datasets the diagnostic does not
    reject) or "first_stage_f" (keep datasets passing a first-stage F test).
    """
    scenario: str
    statistic: str
    conditioning: str
    threshold: float
    conditional: np.ndarray
    unconditional: np.ndarray
    distance_to_normal: float
    distance_to_unconditional: float
    unconditional_to_normal: float
    degenerate_count: int = 0

    def __post_init__(self):
        if self.conditional.size == 0:
            raise EmptyConditioningSetError("conditioning set is empty")

    @property
    def n_conditional(self) -> int:
        return int(self.conditional.size)

    @property
    def n_unconditional(self) -> int:
        return int(self.unconditional.size)

    @property
    def acceptance_rate(self) -> float:
        return self.n_conditional / self.n_unconditional

    def to_record(self) -> Dict[str, object]:
        return {
            "scenario": self.scenario,
            "statistic": self.statistic,
            "conditioning": self.conditioning,
            "threshold": self.threshold,
            "n_conditional": self.n_conditional,
            "n_unconditional": self.n_unconditional,
            "distance_to_normal": self.distance_to_normal,
            "distance_to_unconditional": self.distance_to_unconditional,
            "unconditional_to_normal": self.unconditional_to_normal,
            "degenerate": self.degenerate_count,
        }


@dataclass(frozen=True)
class BandDiagnostic:
    """sqrt(K) sup |pi_hat(alpha) - alpha| with its asymptotic p-value (descriptive)"""
    statistic: float
    p_value: float
    K: int


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    """The outputs of a plan for one scenario; profile and band only when requested"""
    row: SizePowerRow
    profile: Optional[RejectionProfile] = None
    band: Optional[BandDiagnostic] = None


@dataclass(frozen=True, eq=False)
class PlanReport:
    plan: ExperimentPlan
    scenarios: Tuple[ScenarioReport, ...]

    @property
    def rows(self) -> List[SizePowerRow]:
        return [s.row for s in self.scenarios]

    def wants(self, kind: ReportKind) -> bool:
        return ReportKind(kind) in self.plan.outputs

    def profile_records(self) -> List[Dict[str, object]]:
        records: List[Dict[str, object]] = []
        for s in self.scenarios:
            if s.profile is None:
                continue
            for rec in s.profile.to_records():
                records.append({"scenario": s.row.scenario, "n": s.row.n, **rec})
        return records

    def band_records(self) -> List[Dict[str, object]]:
        return [
            {
                "scenario": s.row.scenario,
                "n": s.row.n,
                "m": s.row.m,
                "K": s.band.K,
                "statistic": s.band.statistic,
                "p_value": s.band.p_value,
            }
            for s in self.scenarios
            if s.band is not None
        ]
