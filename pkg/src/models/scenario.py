"""
Scenario Models - data-generating scenarios and fitted models

Five scenario families, each with a valid (null) regime and an invalid
(alternative) regime. A FittedModel carries the estimates the bootstrap
needs, conditionally on one simulated dataset.
"""

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import DegenerateFitError, DomainError


MIN_SAMPLE_SIZE = 8


class Variant(str, Enum):
    """Scenario family"""
    IV = "iv"
    AR1 = "ar1"
    BOUNDARY = "boundary"
    HEAVY_TAIL = "heavytail"
    DELTA = "delta"


class IVStrength(str, Enum):
    STRONG = "strong"    # coefficients are pi
    WEAK = "weak"        # coefficients are lambda, pi = lambda / sqrt(n)


class IVScheme(str, Enum):
    PARAMETRIC_GAUSSIAN = "parametric"
    NONPARAMETRIC_IID = "nonparametric"


class AR1Regime(str, Enum):
    STATIONARY = "stationary"
    LOCAL_TO_UNITY = "local_to_unity"


class AR1Scheme(str, Enum):
    RECURSIVE_PARAMETRIC_GAUSSIAN = "parametric"
    RESIDUAL_RESAMPLE = "residual"


class BoundaryRegime(str, Enum):
    INTERIOR = "interior"
    NEAR_BOUNDARY = "near_boundary"


class HeavyTailRegime(str, Enum):
    FINITE_VARIANCE = "finite_variance"
    STABLE = "stable"


class Innovation(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"


class HeavyTailScheme(str, Enum):
    IID_RESAMPLE = "iid"
    WILD_RADEMACHER = "wild"


class DeltaRegime(str, Enum):
    REGULAR = "regular"
    NEAR_SINGULAR = "near_singular"


# ============================================================
# Scenario specifications
# ============================================================

@dataclass(frozen=True)
class ScenarioSpec:
    """Common part of every scenario: the sample size"""
    n: int

    variant = None  # set per subclass

    def __post_init__(self):
        if int(self.n) != self.n or self.n < MIN_SAMPLE_SIZE:
            raise DomainError(f"n must be an integer >= {MIN_SAMPLE_SIZE}, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and math.isnan(value):
                raise DomainError(f"{f.name} must not be NaN")

    @property
    def is_null(self) -> bool:
        """True when the bootstrap is valid for this scenario"""
        raise NotImplementedError

    @property
    def label(self) -> str:
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"variant": self.variant.value}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


@dataclass(frozen=True)
class IVScenario(ScenarioSpec):
    """
    Linear IV model y = beta x + u, x = pi'z + v with k fixed instruments

    coefficients holds pi (Strong) or lambda (Weak, pi = lambda n^-1/2).
    """
    k: int = 1
    rho_uv: float = 0.9
    strength: IVStrength = IVStrength.STRONG
    coefficients: Tuple[float, ...] = (1.0,)
    beta: float = 0.0
    scheme: IVScheme = IVScheme.PARAMETRIC_GAUSSIAN

    variant = Variant.IV

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "strength", IVStrength(self.strength))
        object.__setattr__(self, "scheme", IVScheme(self.scheme))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.k < 1:
            raise DomainError(f"k must be >= 1, got {self.k}")
        if len(self.coefficients) != self.k:
            raise DomainError(
                f"coefficients must have length k={self.k}, got {len(self.coefficients)}"
            )
        if not 0.0 < self.rho_uv < 1.0:
            raise DomainError(f"rho_uv must lie in (0, 1), got {self.rho_uv}")
        if self.k >= self.n:
            raise DomainError(f"k={self.k} instruments need n > k, got n={self.n}")

    @property
    def pi(self) -> np.ndarray:
        coef = np.array(self.coefficients)
        if self.strength == IVStrength.WEAK:
            return coef / math.sqrt(self.n)
        return coef

    @property
    def is_null(self) -> bool:
        return self.strength == IVStrength.STRONG and any(c != 0.0 for c in self.coefficients)

    @property
    def label(self) -> str:
        coef = ",".join(f"{c:g}" for c in self.coefficients)
        name = "pi" if self.strength == IVStrength.STRONG else "lambda"
        return f"iv-{self.strength.value}({name}={coef};rho={self.rho_uv:g};{self.scheme.value})"


@dataclass(frozen=True)
class AR1Scenario(ScenarioSpec):
    """y_t = alpha y_{t-1} + e_t with alpha = alpha0 (Stationary) or 1 + c/n (LocalToUnity)"""
    regime: AR1Regime = AR1Regime.STATIONARY
    alpha0: float = 0.5
    c: float = 0.0
    y0: float = 0.0
    scheme: AR1Scheme = AR1Scheme.RECURSIVE_PARAMETRIC_GAUSSIAN

    variant = Variant.AR1

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "regime", AR1Regime(self.regime))
        object.__setattr__(self, "scheme", AR1Scheme(self.scheme))
        if self.regime == AR1Regime.STATIONARY and not abs(self.alpha0) < 1.0:
            raise DomainError(f"stationary regime needs |alpha0| < 1, got {self.alpha0}")
        if not (math.isfinite(self.c) and math.isfinite(self.y0)):
            raise DomainError("c and y0 must be finite")

    @property
    def true_alpha(self) -> float:
        if self.regime == AR1Regime.LOCAL_TO_UNITY:
            return 1.0 + self.c / self.n
        return float(self.alpha0)

    @property
    def is_null(self) -> bool:
        return self.regime == AR1Regime.STATIONARY

    @property
    def label(self) -> str:
        if self.regime == AR1Regime.LOCAL_TO_UNITY:
            return f"ar1-ltu(c={self.c:g};{self.scheme.value})"
        return f"ar1-stationary(alpha0={self.alpha0:g};{self.scheme.value})"


@dataclass(frozen=True)
class BoundaryScenario(ScenarioSpec):
    """y_i ~ N(theta0, 1) with theta constrained to [0, inf)"""
    regime: BoundaryRegime = BoundaryRegime.INTERIOR
    theta0: float = 1.0
    c: float = 0.0

    variant = Variant.BOUNDARY

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "regime", BoundaryRegime(self.regime))
        if self.regime == BoundaryRegime.INTERIOR and not self.theta0 > 0.0:
            raise DomainError(f"interior regime needs theta0 > 0, got {self.theta0}")
        if self.regime == BoundaryRegime.NEAR_BOUNDARY and not self.c >= 0.0:
            raise DomainError(f"near-boundary regime needs c >= 0, got {self.c}")

    @property
    def true_theta(self) -> float:
        if self.regime == BoundaryRegime.NEAR_BOUNDARY:
            return self.c / math.sqrt(self.n)
        return float(self.theta0)

    @property
    def is_null(self) -> bool:
        return self.regime == BoundaryRegime.INTERIOR

    @property
    def label(self) -> str:
        if self.regime == BoundaryRegime.NEAR_BOUNDARY:
            return f"boundary-near(c={self.c:g})"
        return f"boundary-interior(theta0={self.theta0:g})"


@dataclass(frozen=True)
class HeavyTailScenario(ScenarioSpec):
    """Location model y_i = theta0 + e_i with finite-variance or stable innovations"""
    regime: HeavyTailRegime = HeavyTailRegime.FINITE_VARIANCE
    innovation: Innovation = Innovation.STUDENT_T
    df: float = 5.0
    tail_index: float = 1.5
    theta0: float = 0.0
    scheme: HeavyTailScheme = HeavyTailScheme.IID_RESAMPLE

    variant = Variant.HEAVY_TAIL

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "regime", HeavyTailRegime(self.regime))
        object.__setattr__(self, "innovation", Innovation(self.innovation))
        object.__setattr__(self, "scheme", HeavyTailScheme(self.scheme))
        if (
            self.regime == HeavyTailRegime.FINITE_VARIANCE
            and self.innovation == Innovation.STUDENT_T
            and not self.df > 4.0
        ):
            raise DomainError(f"Student-t innovations need df > 4, got {self.df}")
        if self.regime == HeavyTailRegime.STABLE and not 1.0 < self.tail_index < 2.0:
            raise DomainError(f"stable regime needs tail index in (1, 2), got {self.tail_index}")

    @property
    def is_null(self) -> bool:
        return self.regime == HeavyTailRegime.FINITE_VARIANCE

    @property
    def label(self) -> str:
        if self.regime == HeavyTailRegime.STABLE:
            return f"heavytail-stable(alpha={self.tail_index:g};{self.scheme.value})"
        if self.innovation == Innovation.STUDENT_T:
            return f"heavytail-t(df={self.df:g};{self.scheme.value})"
        return f"heavytail-gaussian({self.scheme.value})"


@dataclass(frozen=True)
class DeltaScenario(ScenarioSpec):
    """
    tau = g(theta) with g(theta) = theta^2 and y_i ~ N(theta0, 1)

    NearSingular places theta0 = c / (2 sqrt(n)) so g'(theta0) = c n^-1/2.
    """
    regime: DeltaRegime = DeltaRegime.REGULAR
    theta0: float = 1.0
    c: float = 0.0

    variant = Variant.DELTA

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "regime", DeltaRegime(self.regime))
        if self.regime == DeltaRegime.REGULAR and self.theta0 == 0.0:
            raise DomainError("regular regime needs g'(theta0) = 2 theta0 != 0")
        if self.regime == DeltaRegime.NEAR_SINGULAR and not self.c >= 0.0:
            raise DomainError(f"near-singular regime needs c >= 0, got {self.c}")

    @property
    def true_theta(self) -> float:
        if self.regime == DeltaRegime.NEAR_SINGULAR:
            return self.c / (2.0 * math.sqrt(self.n))
        return float(self.theta0)

    @property
    def is_null(self) -> bool:
        return self.regime == DeltaRegime.REGULAR

    @property
    def label(self) -> str:
        if self.regime == DeltaRegime.NEAR_SINGULAR:
            return f"delta-near-singular(c={self.c:g})"
        return f"delta-regular(theta0={self.theta0:g})"


SCENARIO_TYPES = {
    Variant.IV: IVScenario,
    Variant.AR1: AR1Scenario,
    Variant.BOUNDARY: BoundaryScenario,
    Variant.HEAVY_TAIL: HeavyTailScenario,
    Variant.DELTA: DeltaScenario,
}


def build_scenario(variant: str, **params) -> ScenarioSpec:
    """Construct a scenario from its family name and keyword parameters"""
    try:
        cls = SCENARIO_TYPES[Variant(variant)]
    except ValueError:
        names = ", ".join(v.value for v in Variant)
        raise DomainError(f"unknown scenario '{variant}' (expected one of {names})") from None
    if "coefficients" in params and params["coefficients"] is not None:
        params["coefficients"] = tuple(params["coefficients"])
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(params) - known)
    if unknown:
        raise DomainError(f"{variant} scenario does not take {', '.join(unknown)}")
    return cls(**params)


# ============================================================
# Fitted models
# ============================================================

@dataclass(frozen=True, eq=False)
class IVEstimates:
    beta_hat: float
    pi_hat: np.ndarray
    omega_hat: float
    design: np.ndarray          # n x k fixed instruments, S_zz = I
    u_hat: np.ndarray           # centered residual pairs for the nonparametric scheme
    v_hat: np.ndarray

    @property
    def first_stage_f(self) -> float:
        """n pi_hat'pi_hat / k with known unit error variance"""
        n, k = self.design.shape
        return float(n * self.pi_hat @ self.pi_hat / k)


@dataclass(frozen=True, eq=False)
class AR1Estimates:
    alpha_hat: float
    sigma_hat: float
    se: float
    y0: float
    residuals: np.ndarray       # centered residual pool


@dataclass(frozen=True)
class BoundaryEstimates:
    theta_hat: float
    ybar: float


@dataclass(frozen=True, eq=False)
class HeavyTailEstimates:
    theta_hat: float
    sigma_hat: float
    residuals: np.ndarray       # y - theta_hat


@dataclass(frozen=True)
class DeltaEstimates:
    theta_hat: float
    sigma_hat: float
    tau_hat: float


@dataclass(frozen=True, eq=False)
class FittedModel:
    """
    Scenario conditioned on one simulated dataset

    A degenerate fit (exact zero denominator) keeps its reason and refuses
    to produce statistics.
    """
    scenario: ScenarioSpec
    data_digest: str
    estimates: Any
    degenerate_reason: Optional[str] = None
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def is_degenerate(self) -> bool:
        return self.degenerate_reason is not None

    def require_regular(self) -> "FittedModel":
        if self.degenerate_reason is not None:
            raise DegenerateFitError(
                f"{self.scenario.label}: {self.degenerate_reason} (data {self.data_digest[:12]})"
            )
        return self
