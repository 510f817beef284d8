"""
Discrepancy Engine - edf and exact distances to the Gaussian cdf

Every supremum is taken over the exact candidate set of the step function
(both one-sided values at each jump plus interval endpoints); integral
norms use the classical sorted-sample closed forms.
"""

import math
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import special

from src.engines.probkernel import std_normal_cdf
from src.errors import DegenerateTailError, SingularOmegaError
from src.models.measures import (
    Discrepancy,
    DiscrepancyMeasure,
    MeasureKind,
    SortedSample,
)


def edf_at(sample: SortedSample, u) -> float:
    """(number of draws <= u) / m; right-continuous"""
    count = np.searchsorted(sample.draws, u, side="right")
    return count / sample.m


def _edf_left(sample: SortedSample, u) -> float:
    """left limit G(u-) = (number of draws < u) / m"""
    return np.searchsorted(sample.draws, u, side="left") / sample.m


def _one_sided(sample: SortedSample):
    """(sup (G - Phi), sup (Phi - G)) over the jump points"""
    m = sample.m
    cdf = std_normal_cdf(sample.draws)
    i = np.arange(1, m + 1)
    d_plus = float(np.max(i / m - cdf))
    d_minus = float(np.max(cdf - (i - 1) / m))
    return d_plus, d_minus


# ============================================================
# Sup-type measures
# ============================================================

def ks_distance(sample: SortedSample) -> Discrepancy:
    """sup_u |G(u) - Phi(u)|"""
    d_plus, d_minus = _one_sided(sample)
    return Discrepancy(max(d_plus, d_minus, 0.0), DiscrepancyMeasure.ks())


def signed_ks(sample: SortedSample, side: str) -> Discrepancy:
    """One-sided suprema: plus = sup (G - Phi)+, minus = sup (Phi - G)+"""
    d_plus, d_minus = _one_sided(sample)
    if side in ("plus", "+"):
        return Discrepancy(max(0.0, d_plus), DiscrepancyMeasure(MeasureKind.SIGNED_KS_PLUS))
    if side in ("minus", "-"):
        return Discrepancy(max(0.0, d_minus), DiscrepancyMeasure(MeasureKind.SIGNED_KS_MINUS))
    raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")


def interval_sup(sample: SortedSample, lower: float, upper: float) -> Discrepancy:
    """sup over the closed interval [lower, upper] of |G - Phi|"""
    measure = DiscrepancyMeasure.interval(lower, upper)
    draws = sample.draws
    candidates = [0.0]

    # endpoints (right-continuous values; infinite ends contribute 0)
    for end in (lower, upper):
        if math.isfinite(end):
            candidates.append(abs(edf_at(sample, end) - std_normal_cdf(end)))

    # jumps in (lower, upper]: both one-sided values are reached inside A
    inside = draws[(draws > lower) & (draws <= upper)]
    if inside.size:
        jumps = np.unique(inside)
        cdf = std_normal_cdf(jumps)
        right = np.searchsorted(draws, jumps, side="right") / sample.m
        left = np.searchsorted(draws, jumps, side="left") / sample.m
        candidates.append(float(np.max(np.abs(right - cdf))))
        candidates.append(float(np.max(np.abs(left - cdf))))

    return Discrepancy(float(max(candidates)), measure)


def point_abs(sample: SortedSample, x: float) -> Discrepancy:
    """|G(x) - Phi(x)|"""
    signed = float(edf_at(sample, x) - std_normal_cdf(x))
    return Discrepancy(abs(signed), DiscrepancyMeasure.point(x), signed=signed)


def sup_distance_to(
    sample: SortedSample,
    cdf: Callable[[np.ndarray], np.ndarray],
    cdf_left: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    atoms: Iterable[float] = (),
) -> float:
    """
    sup_u |G(u) - F(u)| for a cdf F that is continuous except at `atoms`

    cdf_left gives F(u-); it defaults to cdf (continuous F).
    """
    cdf_left = cdf_left or cdf
    points = np.unique(np.concatenate([sample.draws, np.asarray(list(atoms), dtype=float)]))
    right_g = np.searchsorted(sample.draws, points, side="right") / sample.m
    left_g = np.searchsorted(sample.draws, points, side="left") / sample.m
    right = np.abs(right_g - cdf(points))
    left = np.abs(left_g - cdf_left(points))
    return float(max(np.max(right), np.max(left)))


# ============================================================
# Integral measures
# ============================================================

def cvm_distance(sample: SortedSample) -> Discrepancy:
    """L2(dPhi) norm of G - Phi; value^2 = W^2 / m with W^2 the Cramer-von Mises statistic"""
    m = sample.m
    cdf = std_normal_cdf(sample.draws)
    i = np.arange(1, m + 1)
    w2 = 1.0 / (12.0 * m) + float(np.sum((cdf - (2 * i - 1) / (2.0 * m)) ** 2))
    return Discrepancy(math.sqrt(w2 / m), DiscrepancyMeasure(MeasureKind.CVM))


def ad_distance(sample: SortedSample) -> Discrepancy:
    """Weighted L2 norm with weight 1/(Phi(1 - Phi)); value^2 = A^2 / m"""
    m = sample.m
    cdf = std_normal_cdf(sample.draws)
    if np.any(cdf <= 0.0) or np.any(cdf >= 1.0):
        raise DegenerateTailError(
            "Anderson-Darling weight undefined: a draw maps to Phi in {0, 1}"
        )
    i = np.arange(1, m + 1)
    log_cdf = special.log_ndtr(sample.draws)
    log_sf = special.log_ndtr(-sample.draws[::-1])
    value2 = -1.0 - float(np.sum((2 * i - 1) * (log_cdf + log_sf))) / (m * m)
    return Discrepancy(math.sqrt(max(value2, 0.0)), DiscrepancyMeasure(MeasureKind.AD))


# ============================================================
# Moment-based measure
# ============================================================

def moment_vector(sample: SortedSample) -> np.ndarray:
    """v = (mean x^3, mean x^4 - 3)"""
    x = sample.draws
    return np.array([np.mean(x**3), np.mean(x**4) - 3.0])


def moment_discrepancy(sample: SortedSample, omega=None) -> Discrepancy:
    """Quadratic form v' Omega^-1 v"""
    measure = DiscrepancyMeasure.moment(omega)
    matrix = np.array(measure.omega)
    v = moment_vector(sample)
    try:
        solved = np.linalg.solve(matrix, v)
    except np.linalg.LinAlgError as e:
        raise SingularOmegaError(f"omega is singular: {e}") from e
    return Discrepancy(max(float(v @ solved), 0.0), measure)


# ============================================================
# Dispatch
# ============================================================

def evaluate(sample: SortedSample, measure: DiscrepancyMeasure) -> Discrepancy:
    """Discrepancy of a sample under any measure"""
    kind = measure.kind
    if kind == MeasureKind.KS:
        return ks_distance(sample)
    if kind == MeasureKind.SIGNED_KS_PLUS:
        return signed_ks(sample, "plus")
    if kind == MeasureKind.SIGNED_KS_MINUS:
        return signed_ks(sample, "minus")
    if kind == MeasureKind.CVM:
        return cvm_distance(sample)
    if kind == MeasureKind.AD:
        return ad_distance(sample)
    if kind == MeasureKind.INTERVAL_SUP:
        return interval_sup(sample, measure.lower, measure.upper)
    if kind == MeasureKind.POINT_ABS:
        return point_abs(sample, measure.x)
    if kind == MeasureKind.MOMENT:
        return moment_discrepancy(sample, measure.omega)
    raise ValueError(f"unsupported measure {measure}")
