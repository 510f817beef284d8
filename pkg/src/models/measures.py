"""
Measure Models - samples, discrepancy measures and their values

SortedSample carries the m bootstrap draws behind every edf computation;
DiscrepancyMeasure is the tagged choice of (semi)norm of G - Phi.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from src.errors import DomainError


class MeasureKind(str, Enum):
    """Discrepancy measure family"""
    KS = "ks"
    SIGNED_KS_PLUS = "sks+"
    SIGNED_KS_MINUS = "sks-"
    CVM = "cvm"
    AD = "ad"
    INTERVAL_SUP = "interval"
    POINT_ABS = "point"
    MOMENT = "moment"


# Asymptotic covariance of (Z^3, Z^4 - 3) under N(0,1): E Z^6 = 15, Var Z^4 = 96
DEFAULT_MOMENT_OMEGA: Tuple[Tuple[float, float], Tuple[float, float]] = ((15.0, 0.0), (0.0, 96.0))


@dataclass(frozen=True, eq=False)
class SortedSample:
    """
    Ascending finite sample of bootstrap draws

    Build with SortedSample.from_draws(); the constructor assumes sorted input.
    """
    draws: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.draws, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise DomainError("a sample needs at least one draw")
        if not np.all(np.isfinite(arr)):
            raise DomainError("sample draws must be finite")
        if arr.size > 1 and np.any(np.diff(arr) < 0):
            raise DomainError("sample draws must be non-decreasing")
        arr.setflags(write=False)
        object.__setattr__(self, "draws", arr)

    @classmethod
    def from_draws(cls, draws) -> "SortedSample":
        return cls(np.sort(np.asarray(draws, dtype=float)))

    @property
    def m(self) -> int:
        return int(self.draws.size)

    def __len__(self) -> int:
        return self.m


@dataclass(frozen=True)
class DiscrepancyMeasure:
    """
    Norm or seminorm of G - Phi

    Parameters are only meaningful for their kind: (lower, upper) for
    INTERVAL_SUP, x for POINT_ABS, omega for MOMENT.
    """
    kind: MeasureKind = MeasureKind.KS
    lower: float = -math.inf
    upper: float = math.inf
    x: float = 0.0
    omega: Tuple[Tuple[float, float], Tuple[float, float]] = field(
        default=DEFAULT_MOMENT_OMEGA
    )

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasureKind(self.kind))
        if self.kind == MeasureKind.INTERVAL_SUP:
            if math.isnan(self.lower) or math.isnan(self.upper) or self.lower > self.upper:
                raise DomainError(f"interval [{self.lower}, {self.upper}] is empty")
            if self.lower == math.inf or self.upper == -math.inf:
                raise DomainError(f"interval [{self.lower}, {self.upper}] is empty")
        if self.kind == MeasureKind.POINT_ABS and not math.isfinite(self.x):
            raise DomainError(f"evaluation point must be finite, got {self.x}")
        if self.kind == MeasureKind.MOMENT:
            omega = tuple(tuple(float(v) for v in row) for row in self.omega)
            object.__setattr__(self, "omega", omega)
            matrix = np.array(omega)
            if matrix.shape != (2, 2) or not np.allclose(matrix, matrix.T):
                raise DomainError("omega must be a symmetric 2x2 matrix")
            if np.any(np.linalg.eigvalsh(matrix) <= 0.0):
                raise DomainError("omega must be positive definite")

    # ===== constructors =====

    @classmethod
    def ks(cls) -> "DiscrepancyMeasure":
        return cls(MeasureKind.KS)

    @classmethod
    def interval(cls, lower: float, upper: float) -> "DiscrepancyMeasure":
        return cls(MeasureKind.INTERVAL_SUP, lower=lower, upper=upper)

    @classmethod
    def point(cls, x: float) -> "DiscrepancyMeasure":
        return cls(MeasureKind.POINT_ABS, x=x)

    @classmethod
    def moment(cls, omega=None) -> "DiscrepancyMeasure":
        return cls(MeasureKind.MOMENT, omega=omega if omega is not None else DEFAULT_MOMENT_OMEGA)

    @classmethod
    def parse(cls, text: str) -> "DiscrepancyMeasure":
        """
        Parse the command-line spelling

        ks | cvm | ad | sks+ | sks- | interval:a,b | point:x | moment
        (interval bounds accept inf / -inf)
        """
        text = text.strip().lower()
        name, _, args = text.partition(":")
        try:
            kind = MeasureKind(name)
        except ValueError:
            raise DomainError(f"unknown measure '{text}'") from None

        if kind == MeasureKind.INTERVAL_SUP:
            parts = [p.strip() for p in args.split(",")]
            if len(parts) != 2:
                raise DomainError(f"interval measure needs 'interval:a,b', got '{text}'")
            return cls.interval(float(parts[0]), float(parts[1]))
        if kind == MeasureKind.POINT_ABS:
            if not args:
                raise DomainError(f"point measure needs 'point:x', got '{text}'")
            return cls.point(float(args))
        if args:
            raise DomainError(f"measure '{name}' takes no parameters")
        return cls(kind)

    # ===== properties =====

    @property
    def is_norm_type(self) -> bool:
        """Norm-type measures scale with sqrt(m); the moment form scales with m"""
        return self.kind != MeasureKind.MOMENT

    @property
    def dominated_by_sup(self) -> bool:
        return self.kind in (
            MeasureKind.KS,
            MeasureKind.SIGNED_KS_PLUS,
            MeasureKind.SIGNED_KS_MINUS,
            MeasureKind.INTERVAL_SUP,
            MeasureKind.POINT_ABS,
        )

    @property
    def label(self) -> str:
        if self.kind == MeasureKind.INTERVAL_SUP:
            return f"interval:{_fmt(self.lower)},{_fmt(self.upper)}"
        if self.kind == MeasureKind.POINT_ABS:
            return f"point:{_fmt(self.x)}"
        if self.kind == MeasureKind.MOMENT and self.omega != DEFAULT_MOMENT_OMEGA:
            (a, b), (_, d) = self.omega
            return f"moment:{_fmt(a)},{_fmt(b)},{_fmt(d)}"
        return self.kind.value

    def __str__(self) -> str:
        return self.label


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


@dataclass(frozen=True)
class Discrepancy:
    """Value of a discrepancy measure on one sample"""
    value: float
    measure: DiscrepancyMeasure
    # signed pointwise difference G(x) - Phi(x), kept for PointAbs
    signed: Optional[float] = None

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise DomainError(f"discrepancy must be finite and non-negative, got {self.value}")
