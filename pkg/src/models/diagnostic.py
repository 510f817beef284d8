"""
Diagnostic Models - test configuration, outcomes, reference laws, profiles
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from src.errors import DomainError
from src.models.measures import Discrepancy, DiscrepancyMeasure
from src.models.seeds import SeedSpec


class Standardization(str, Enum):
    """Transformation of the bootstrap draws before the test"""
    NONE = "none"
    SCALE = "scale"                      # T* / sigma_hat
    LOCATION_SCALE = "location_scale"    # (T* - mu_hat) / sigma_hat


class ReferenceKind(str, Enum):
    """Null law a p-value is read from"""
    KOLMOGOROV_SERIES = "kolmogorov"
    ONE_SIDED_EXACT = "one_sided"
    SIMULATED_TABLE = "table"


def default_prepass_size(m: int) -> int:
    return max(10_000, 100 * m)


@dataclass(frozen=True)
class DiagnosticConfig:
    """
    One diagnostic test

    prepass_M defaults to max(10^4, 100 m) and must be at least 10 m when
    the draws are standardized.
    """
    m: int = 20
    measure: DiscrepancyMeasure = field(default_factory=DiscrepancyMeasure.ks)
    standardization: Standardization = Standardization.NONE
    prepass_M: Optional[int] = None
    level_alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "standardization", Standardization(self.standardization))
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")
        if not 0.0 < self.level_alpha < 1.0:
            raise DomainError(f"level_alpha must lie in (0, 1), got {self.level_alpha}")
        if self.prepass_M is None:
            object.__setattr__(self, "prepass_M", default_prepass_size(self.m))
        if self.standardization != Standardization.NONE and self.prepass_M < 10 * self.m:
            raise DomainError(
                f"prepass_M={self.prepass_M} must be at least 10 m = {10 * self.m}"
            )

    @property
    def standardized(self) -> bool:
        return self.standardization != Standardization.NONE


@dataclass(frozen=True)
class DiagnosticOutcome:
    """Result of one test: (m, d*, T*, p*)"""
    m: int
    d_star: Discrepancy
    t_star: float
    p_value: float
    reference: ReferenceKind
    table_id: Optional[str] = None

    def __post_init__(self):
        if not self.t_star >= 0.0:
            raise DomainError(f"t_star must be non-negative, got {self.t_star}")
        if not 0.0 <= self.p_value <= 1.0:
            raise DomainError(f"p_value must lie in [0, 1], got {self.p_value}")

    def rejects(self, alpha: float) -> bool:
        return self.p_value <= alpha

    def to_record(self) -> dict:
        return {
            "m": self.m,
            "measure": self.d_star.measure.label,
            "d_star": self.d_star.value,
            "t_star": self.t_star,
            "p_value": self.p_value,
            "reference": self.reference.value,
            "table_id": self.table_id or "",
        }


@dataclass(frozen=True, eq=False)
class ReferenceTable:
    """
    Simulated null law of a scaled discrepancy

    statistics is the sorted null sample; the table is immutable once built.
    """
    measure: DiscrepancyMeasure
    m_ref: int
    replications: int
    statistics: np.ndarray
    seed: SeedSpec
    key: str = ""

    def __post_init__(self):
        stats = np.sort(np.asarray(self.statistics, dtype=float))
        if stats.size != self.replications:
            raise DomainError(
                f"table holds {stats.size} statistics, header says {self.replications}"
            )
        stats.setflags(write=False)
        object.__setattr__(self, "statistics", stats)

    @property
    def table_id(self) -> str:
        return self.key or f"{self.measure.label}-m{self.m_ref}-r{self.replications}"

    def cdf(self, t: float) -> float:
        """Right-continuous edf of the null sample"""
        return float(np.searchsorted(self.statistics, t, side="right")) / self.replications

    def p_value(self, t: float) -> float:
        return 1.0 - self.cdf(t)

    def quantile(self, p: float) -> float:
        """Smallest tabulated t with cdf(t) >= p"""
        if not 0.0 < p < 1.0:
            raise DomainError(f"quantile level must lie in (0, 1), got {p}")
        index = max(0, math.ceil(p * self.replications) - 1)
        return float(self.statistics[index])


@dataclass(frozen=True, eq=False)
class RejectionProfile:
    """Fractions of K independent tests rejecting at each level alpha"""
    alphas: np.ndarray
    pi_hat: np.ndarray
    K: int
    m: int
    uniform_band_stat: float
    p_values: np.ndarray
    degenerate_count: int = 0

    def pointwise_se(self) -> np.ndarray:
        """sqrt(pi_hat (1 - pi_hat) / K)"""
        return np.sqrt(self.pi_hat * (1.0 - self.pi_hat) / self.K)

    def null_se(self) -> np.ndarray:
        """sqrt(alpha (1 - alpha) / K), the spread expected under the null"""
        return np.sqrt(self.alphas * (1.0 - self.alphas) / self.K)

    def rate_at(self, alpha: float) -> float:
        matches = np.flatnonzero(np.isclose(self.alphas, alpha, rtol=0.0, atol=1e-12))
        if matches.size:
            return float(self.pi_hat[matches[0]])
        return float(np.mean(self.p_values <= alpha))

    def to_records(self) -> list:
        se = self.pointwise_se()
        null = self.null_se()
        return [
            {
                "alpha": float(a),
                "pi_hat": float(p),
                "pointwise_se": float(s),
                "null_se": float(ns),
                "K": self.K,
                "m": self.m,
            }
            for a, p, s, ns in zip(self.alphas, self.pi_hat, se, null)
        ]
