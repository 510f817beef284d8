"""
Probability Kernel - exact cdfs, quantiles and random samplers

Gaussian and Kolmogorov distribution functions plus the seeded samplers
every other engine consumes. All functions are pure given their inputs and
SeedSpec, so they can run concurrently from any number of workers.
"""

import math
from typing import Union

import numpy as np
from scipy import optimize, special

from src.errors import DomainError
from src.models.seeds import SeedSpec


ArrayOrFloat = Union[float, np.ndarray]

# Kolmogorov series truncation floor
SERIES_FLOOR = 1e-16
# Below this point the theta-function form of H converges faster
_SMALL_T = 1.0
_T_UPPER = 12.0


# ============================================================
# Gaussian
# ============================================================

def std_normal_cdf(x: ArrayOrFloat) -> ArrayOrFloat:
    """Phi(x) via the complementary error function, erfc(-x/sqrt(2))/2"""
    return special.ndtr(x)


def std_normal_quantile(p: ArrayOrFloat) -> ArrayOrFloat:
    """Inverse of Phi on the open unit interval"""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"std_normal_quantile requires 0 < p < 1, got {p}")
    out = special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


# ============================================================
# Kolmogorov law  H(t) = P(sup |W| <= t)
# ============================================================

def _alternating_tail(t: float) -> float:
    """sum_k (-1)^(k-1) exp(-2 k^2 t^2), stopped once a term drops below the floor"""
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * t * t)
        if term == 0.0 or term < SERIES_FLOOR * total:
            break
        total += term if k % 2 == 1 else -term
        k += 1
    return total


def _kolmogorov_cdf_scalar(t: float) -> float:
    if t <= 0.0:
        return 0.0
    if t >= _T_UPPER:
        return 1.0

    if t < _SMALL_T:
        # theta-function form: H(t) = sqrt(2 pi)/t * sum_k exp(-(2k-1)^2 pi^2 / (8 t^2))
        scale = math.pi**2 / (8.0 * t * t)
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * scale)
            if term == 0.0 or term < SERIES_FLOOR * total:
                break
            total += term
            k += 1
        return min(1.0, math.sqrt(2.0 * math.pi) / t * total)

    # H(t) = 1 - 2 sum_k (-1)^(k-1) exp(-2 k^2 t^2)
    return min(1.0, max(0.0, 1.0 - 2.0 * _alternating_tail(t)))


def kolmogorov_cdf(t: ArrayOrFloat) -> ArrayOrFloat:
    """Distribution function of the supremum of a standard Brownian bridge"""
    if np.ndim(t) == 0:
        return _kolmogorov_cdf_scalar(float(t))
    arr = np.asarray(t, dtype=float)
    return np.vectorize(_kolmogorov_cdf_scalar, otypes=[float])(arr)


def kolmogorov_sf(t: float) -> float:
    """1 - H(t), summed directly in the upper tail"""
    if t <= 0.0:
        return 1.0
    if t < _SMALL_T:
        return 1.0 - _kolmogorov_cdf_scalar(t)
    return min(1.0, max(0.0, 2.0 * _alternating_tail(t)))


def kolmogorov_quantile(p: float) -> float:
    """Inverse of H by root bracketing on the monotone cdf"""
    if not 0.0 < p < 1.0:
        raise DomainError(f"kolmogorov_quantile requires 0 < p < 1, got {p}")
    return optimize.brentq(
        lambda t: _kolmogorov_cdf_scalar(t) - p, 0.0, _T_UPPER, xtol=1e-14, rtol=1e-15, maxiter=500
    )


def kolmogorov_one_sided_sf(t: float) -> float:
    """P(sup W > t) = exp(-2 t^2) for t >= 0"""
    if t <= 0.0:
        return 1.0
    return math.exp(-2.0 * t * t)


def kolmogorov_one_sided_quantile(p: float) -> float:
    """t with P(sup W <= t) = p"""
    if not 0.0 < p < 1.0:
        raise DomainError(f"kolmogorov_one_sided_quantile requires 0 < p < 1, got {p}")
    return math.sqrt(-math.log1p(-p) / 2.0)


# ============================================================
# Samplers
# ============================================================

def check_tail_index(alpha: float) -> float:
    """Stable tail index: 1 < alpha <= 2 (alpha = 2 is the Gaussian case)"""
    if not 1.0 < alpha <= 2.0:
        raise DomainError(f"tail index must lie in (1, 2], got {alpha}")
    return float(alpha)


def stable_variates(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """
    Symmetric alpha-stable draws (scale 1, location 0)

    Chambers-Mallows-Stuck: one uniform angle and one unit exponential per draw.
    """
    check_tail_index(alpha)
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=size)
    w = rng.standard_exponential(size=size)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - alpha * v) / w) ** ((1.0 - alpha) / alpha)
    )


def rademacher_variates(rng: np.random.Generator, size) -> np.ndarray:
    return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0


def _check_count(count: int) -> int:
    if count < 0:
        raise DomainError(f"count must be non-negative, got {count}")
    return int(count)


def sample_std_normal(seed: SeedSpec, count: int) -> np.ndarray:
    return seed.generator().standard_normal(_check_count(count))


def sample_symmetric_stable(seed: SeedSpec, alpha: float, count: int) -> np.ndarray:
    check_tail_index(alpha)
    return stable_variates(seed.generator(), alpha, _check_count(count))


def sample_rademacher(seed: SeedSpec, count: int) -> np.ndarray:
    return rademacher_variates(seed.generator(), _check_count(count))
