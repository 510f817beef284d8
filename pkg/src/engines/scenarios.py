"""
Scenario Engine - simulation, estimation and bootstrap draws

Each scenario family is handled by a ScenarioModel that simulates one
dataset, computes the estimates, the original statistic T_n and vectorized
bootstrap draws T*_n conditionally on the fitted model.
"""

import hashlib
import logging
import math
from enum import Enum
from functools import lru_cache
from typing import Dict, Type

import numpy as np
from scipy import signal

from src.engines.probkernel import (
    rademacher_variates,
    stable_variates,
    std_normal_cdf,
)
from src.errors import DegenerateFitError, DomainError
from src.models.measures import Discrepancy, DiscrepancyMeasure
from src.models.scenario import (
    AR1Estimates,
    AR1Scenario,
    AR1Scheme,
    BoundaryEstimates,
    BoundaryScenario,
    DeltaEstimates,
    DeltaScenario,
    FittedModel,
    HeavyTailEstimates,
    HeavyTailRegime,
    HeavyTailScenario,
    HeavyTailScheme,
    Innovation,
    IVEstimates,
    IVScenario,
    IVScheme,
    ScenarioSpec,
    Variant,
)
from src.models.seeds import DESIGN_STREAM, SeedSpec


logger = logging.getLogger(__name__)


class PostStatistic(str, Enum):
    """Statistic whose law is inspected after the diagnostic"""
    IV_T = "iv_t"
    AR1_T = "ar1_t"
    MEAN_T = "mean_t"


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


# ============================================================
# Base
# ============================================================

class ScenarioModel:
    """Simulation and bootstrap for one scenario family"""

    variant: Variant

    def simulate(self, spec: ScenarioSpec, seed: SeedSpec) -> FittedModel:
        raise NotImplementedError

    def original_statistic(self, fitted: FittedModel) -> float:
        raise NotImplementedError

    def draws(self, fitted: FittedModel, rng: np.random.Generator, size: int) -> np.ndarray:
        """size conditionally i.i.d. bootstrap statistics"""
        raise NotImplementedError


# ============================================================
# Linear IV
# ============================================================

@lru_cache(maxsize=32)
def _iv_design(master_seed: int, n: int, k: int) -> np.ndarray:
    rng = SeedSpec(master_seed, (DESIGN_STREAM, n, k)).generator()
    raw = rng.standard_normal((n, k))
    q, _ = np.linalg.qr(raw)
    design = math.sqrt(n) * q
    design.setflags(write=False)
    return design


def iv_design(seed: SeedSpec, n: int, k: int) -> np.ndarray:
    """Fixed instruments with S_zz = z'z/n = I_k, shared by every dataset under one master seed"""
    return _iv_design(seed.master_seed, n, k)


def _iv_errors(rng: np.random.Generator, rho: float, shape) -> tuple:
    e1 = rng.standard_normal(shape)
    e2 = rng.standard_normal(shape)
    return e1, rho * e1 + math.sqrt(1.0 - rho * rho) * e2


class IVModel(ScenarioModel):
    variant = Variant.IV

    def simulate(self, spec: IVScenario, seed: SeedSpec) -> FittedModel:
        n = spec.n
        z = iv_design(seed, n, spec.k)
        rng = seed.generator()
        u, v = _iv_errors(rng, spec.rho_uv, n)
        x = z @ spec.pi + v
        y = spec.beta * x + u

        s_zx = z.T @ x / n
        s_zy = z.T @ y / n
        pi_hat = s_zx
        denom = float(s_zx @ s_zx)
        digest = _digest(x, y)
        if denom == 0.0:
            return FittedModel(spec, digest, None, degenerate_reason="first stage pi_hat = 0")

        beta_hat = float(s_zx @ s_zy) / denom
        u_hat = y - beta_hat * x
        v_hat = x - z @ pi_hat
        estimates = IVEstimates(
            beta_hat=beta_hat,
            pi_hat=pi_hat,
            omega_hat=1.0 / math.sqrt(denom),
            design=z,
            u_hat=u_hat - u_hat.mean(),
            v_hat=v_hat - v_hat.mean(),
        )
        return FittedModel(spec, digest, estimates)

    def original_statistic(self, fitted: FittedModel) -> float:
        est = fitted.require_regular().estimates
        spec = fitted.scenario
        return math.sqrt(spec.n) * (est.beta_hat - spec.beta) / est.omega_hat

    def draws(self, fitted: FittedModel, rng: np.random.Generator, size: int) -> np.ndarray:
        est = fitted.require_regular().estimates
        spec = fitted.scenario
        n, k = spec.n, spec.k
        root_n = math.sqrt(n)

        if spec.scheme == IVScheme.PARAMETRIC_GAUSSIAN:
            # sqrt(n) S_zu*, sqrt(n) S_zv* are exactly N(0, Sigma x I_k) since S_zz = I
            xi_u, xi_v = _iv_errors(rng, spec.rho_uv, (size, k))
        else:
            idx = rng.integers(0, n, size=(size, n))
            z = est.design
            xi_u = est.u_hat[idx] @ z / root_n
            xi_v = est.v_hat[idx] @ z / root_n

        # S_zx* = pi_hat + S_zv*;  beta* - beta_hat = S_zx*'S_zu* / S_zx*'S_zx*
        a = est.pi_hat[None, :] + xi_v / root_n
        denom = np.einsum("ij,ij->i", a, a)
        if np.any(denom == 0.0):
            raise DegenerateFitError("bootstrap first stage hit pi* = 0")
        numer = np.einsum("ij,ij->i", a, xi_u)
        return numer / denom / est.omega_hat

    def first_stage_f(self, fitted: FittedModel) -> float:
        if fitted.is_degenerate:
            return 0.0
        return fitted.estimates.first_stage_f


# ============================================================
# AR(1)
# ============================================================

def _ar1_path(alpha: float, eps: np.ndarray, y0: float) -> np.ndarray:
    """y_t = alpha y_{t-1} + eps_t along the last axis, starting from y0"""
    zi = np.full(eps.shape[:-1] + (1,), alpha * y0)
    y, _ = signal.lfilter([1.0], [1.0, -alpha], eps, axis=-1, zi=zi)
    return y


def _ar1_fit(y: np.ndarray, y0: float):
    """Least squares slope, residual scale and standard error along the last axis"""
    lag = np.concatenate([np.full(y.shape[:-1] + (1,), y0), y[..., :-1]], axis=-1)
    sxx = np.sum(lag * lag, axis=-1)
    sxy = np.sum(lag * y, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_hat = sxy / sxx
        resid = y - alpha_hat[..., None] * lag
        sigma_hat = np.sqrt(np.mean(resid * resid, axis=-1))
        se = sigma_hat / np.sqrt(sxx)
    return alpha_hat, sigma_hat, se, resid, sxx


class AR1Model(ScenarioModel):
    variant = Variant.AR1

    def simulate(self, spec: AR1Scenario, seed: SeedSpec) -> FittedModel:
        rng = seed.generator()
        eps = rng.standard_normal(spec.n)
        y = _ar1_path(spec.true_alpha, eps, spec.y0)
        alpha_hat, sigma_hat, se, resid, sxx = _ar1_fit(y, spec.y0)
        digest = _digest(y)

        if float(sxx) == 0.0 or float(sigma_hat) == 0.0:
            return FittedModel(spec, digest, None, degenerate_reason="sum of squared lags is zero")

        estimates = AR1Estimates(
            alpha_hat=float(alpha_hat),
            sigma_hat=float(sigma_hat),
            se=float(se),
            y0=float(spec.y0),
            residuals=resid - resid.mean(),
        )
        return FittedModel(spec, digest, estimates)

    def original_statistic(self, fitted: FittedModel) -> float:
        est = fitted.require_regular().estimates
        return (est.alpha_hat - fitted.scenario.true_alpha) / est.se

    def draws(self, fitted: FittedModel, rng: np.random.Generator, size: int) -> np.ndarray:
        est = fitted.require_regular().estimates
        n = fitted.scenario.n

        if fitted.scenario.scheme == AR1Scheme.RESIDUAL_RESAMPLE:
            eps = est.residuals[rng.integers(0, n, size=(size, n))]
        else:
            eps = est.sigma_hat * rng.standard_normal((size, n))

        y_star = _ar1_path(est.alpha_hat, eps, est.y0)
        alpha_star, _, se_star, _, sxx = _ar1_fit(y_star, est.y0)
        if np.any(sxx == 0.0) or np.any(se_star == 0.0):
            raise DegenerateFitError("bootstrap AR(1) fit with zero denominator")
        return (alpha_star - est.alpha_hat) / se_star


# ============================================================
# Parameter on the boundary
# ============================================================

class BoundaryModel(ScenarioModel):
    variant = Variant.BOUNDARY

    def simulate(self, spec: BoundaryScenario, seed: SeedSpec) -> FittedModel:
        rng = seed.generator()
        y = spec.true_theta + rng.standard_normal(spec.n)
        ybar = float(np.mean(y))
        estimates = BoundaryEstimates(theta_hat=max(0.0, ybar), ybar=ybar)
        return FittedModel(spec, _digest(y), estimates)

    def original_statistic(self, fitted: FittedModel) -> float:
        spec = fitted.scenario
        return math.sqrt(spec.n) * (fitted.estimates.theta_hat - spec.true_theta)

    def draws(self, fitted: FittedModel, rng: np.random.Generator, size: int) -> np.ndarray:
        # ybar* ~ N(theta_hat, 1/n):  T* = max(-sqrt(n) theta_hat, sqrt(n)(ybar* - theta_hat))
        floor = -math.sqrt(fitted.scenario.n) * fitted.estimates.theta_hat
        return np.maximum(floor, rng.standard_normal(size))


def boundary_closed_form_cdf(fitted: FittedModel, x):
    """Phi(x) 1{x >= -sqrt(n) theta_hat}: exact conditional cdf of the boundary bootstrap"""
    _check_variant(fitted, Variant.BOUNDARY)
    floor = -math.sqrt(fitted.scenario.n) * fitted.estimates.theta_hat
    x = np.asarray(x, dtype=float)
    out = np.where(x >= floor, std_normal_cdf(x), 0.0)
    return float(out) if out.ndim == 0 else out


def boundary_closed_form_left(fitted: FittedModel, x):
    """Left limit of boundary_closed_form_cdf"""
    _check_variant(fitted, Variant.BOUNDARY)
    floor = -math.sqrt(fitted.scenario.n) * fitted.estimates.theta_hat
    x = np.asarray(x, dtype=float)
    return np.where(x > floor, std_normal_cdf(x), 0.0)


def boundary_closed_form_d(fitted: FittedModel) -> Discrepancy:
    """Sup distance of the closed-form bootstrap cdf to Phi, attained at the atom"""
    _check_variant(fitted, Variant.BOUNDARY)
    floor = -math.sqrt(fitted.scenario.n) * fitted.estimates.theta_hat
    return Discrepancy(float(std_normal_cdf(floor)), DiscrepancyMeasure.ks())


def _check_variant(fitted: FittedModel, variant: Variant) -> None:
    if fitted.scenario.variant != variant:
        raise DomainError(f"expected a {variant.value} model, got {fitted.scenario.variant.value}")


# ============================================================
# Heavy tails
# ============================================================

def _innovations(spec: HeavyTailScenario, rng: np.random.Generator) -> np.ndarray:
    if spec.regime == HeavyTailRegime.STABLE:
        return stable_variates(rng, spec.tail_index, spec.n)
    if spec.innovation == Innovation.STUDENT_T:
        # unit variance
        return rng.standard_t(spec.df, size=spec.n) * math.sqrt((spec.df - 2.0) / spec.df)
    return rng.standard_normal(spec.n)


class HeavyTailModel(ScenarioModel):
    variant = Variant.HEAVY_TAIL

    def simulate(self, spec: HeavyTailScenario, seed: SeedSpec) -> FittedModel:
        rng = seed.generator()
        y = spec.theta0 + _innovations(spec, rng)
        theta_hat = float(np.mean(y))
        resid = y - theta_hat
        sigma_hat = float(np.sqrt(np.mean(resid * resid)))
        digest = _digest(y)
        if sigma_hat == 0.0:
            return FittedModel(spec, digest, None, degenerate_reason="constant data, sigma_hat = 0")
        return FittedModel(spec, digest, HeavyTailEstimates(theta_hat, sigma_hat, resid))

    def original_statistic(self, fitted: FittedModel) -> float:
        est = fitted.require_regular().estimates
        spec = fitted.scenario
        # sigma is 1 under finite variance; the stable law has none, so studentize
        sigma = 1.0 if spec.regime == HeavyTailRegime.FINITE_VARIANCE else est.sigma_hat
        return math.sqrt(spec.n) * (est.theta_hat - spec.theta0) / sigma

    def draws(self, fitted: FittedModel, rng: np.random.Generator, size: int) -> np.ndarray:
        est = fitted.require_regular().estimates
        n = fitted.scenario.n
        if fitted.scenario.scheme == HeavyTailScheme.WILD_RADEMACHER:
            shift = rademacher_variates(rng, (size, n)) @ est.residuals / n
        else:
            # resampled mean minus theta_hat equals the resampled residual mean
            shift = est.residuals[rng.integers(0, n, size=(size, n))].mean(axis=1)
        return math.sqrt(n) * shift / est.sigma_hat


# ============================================================
# Delta method with g(theta) = theta^2
# ============================================================

class DeltaModel(ScenarioModel):
    variant = Variant.DELTA

    def simulate(self, spec: DeltaScenario, seed: SeedSpec) -> FittedModel:
        rng = seed.generator()
        y = spec.true_theta + rng.standard_normal(spec.n)
        theta_hat = float(np.mean(y))
        sigma_hat = float(np.sqrt(np.mean((y - theta_hat) ** 2)))
        digest = _digest(y)
        if theta_hat == 0.0 or sigma_hat == 0.0:
            return FittedModel(spec, digest, None, degenerate_reason="g'(theta_hat) sigma_hat = 0")
        return FittedModel(spec, digest, DeltaEstimates(theta_hat, sigma_hat, theta_hat**2))

    def original_statistic(self, fitted: FittedModel) -> float:
        est = fitted.require_regular().estimates
        spec = fitted.scenario
        return math.sqrt(spec.n) * (est.tau_hat - spec.true_theta**2)

    def draws(self, fitted: FittedModel, rng: np.random.Generator, size: int) -> np.ndarray:
        est = fitted.require_regular().estimates
        root_n = math.sqrt(fitted.scenario.n)
        theta_star = est.theta_hat + est.sigma_hat * rng.standard_normal(size) / root_n
        # t-ratio: sqrt(n)(g(theta*) - g(theta_hat)) / (g'(theta_hat) sigma_hat)
        return root_n * (theta_star**2 - est.tau_hat) / (2.0 * est.theta_hat * est.sigma_hat)


# ============================================================
# Dispatch
# ============================================================

MODELS: Dict[Variant, Type[ScenarioModel]] = {
    Variant.IV: IVModel,
    Variant.AR1: AR1Model,
    Variant.BOUNDARY: BoundaryModel,
    Variant.HEAVY_TAIL: HeavyTailModel,
    Variant.DELTA: DeltaModel,
}


def model_for(variant: Variant) -> ScenarioModel:
    return MODELS[Variant(variant)]()


def simulate(spec: ScenarioSpec, seed: SeedSpec) -> FittedModel:
    """Generate one dataset and fit it"""
    fitted = model_for(spec.variant).simulate(spec, seed)
    if fitted.is_degenerate:
        logger.warning(
            f"Degenerate fit for {spec.label} at seed {seed}: {fitted.degenerate_reason}"
        )
    return fitted


def original_statistic(fitted: FittedModel) -> float:
    """T_n at the true parameters of the scenario"""
    return model_for(fitted.scenario.variant).original_statistic(fitted)


def first_stage_f(fitted: FittedModel) -> float:
    _check_variant(fitted, Variant.IV)
    return IVModel().first_stage_f(fitted)


def post_statistic(fitted: FittedModel, kind: PostStatistic) -> float:
    """
    Statistic examined after the diagnostic

    IV_T and AR1_T are the t-statistics for the true parameter; MEAN_T is
    sqrt(n)(ybar - theta0) / sigma_hat for the location-type scenarios.
    """
    kind = PostStatistic(kind)
    variant = fitted.scenario.variant
    if kind == PostStatistic.IV_T:
        _check_variant(fitted, Variant.IV)
        return original_statistic(fitted)
    if kind == PostStatistic.AR1_T:
        _check_variant(fitted, Variant.AR1)
        return original_statistic(fitted)

    spec = fitted.scenario
    est = fitted.require_regular().estimates
    root_n = math.sqrt(spec.n)
    if variant == Variant.HEAVY_TAIL:
        return root_n * (est.theta_hat - spec.theta0) / est.sigma_hat
    if variant == Variant.DELTA:
        return root_n * (est.theta_hat - spec.true_theta) / est.sigma_hat
    if variant == Variant.BOUNDARY:
        return root_n * (est.ybar - spec.true_theta)
    raise DomainError(f"{kind.value} is not defined for {variant.value} scenarios")


def default_post_statistic(variant: Variant) -> PostStatistic:
    if variant == Variant.IV:
        return PostStatistic.IV_T
    if variant == Variant.AR1:
        return PostStatistic.AR1_T
    return PostStatistic.MEAN_T
