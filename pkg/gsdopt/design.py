"""Endpoint mapping, drift, sample sizes and operating characteristics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from gsdopt.boundaries import (
    BoundaryRule,
    FutilityRule,
    Sidedness,
    solve_efficacy_boundaries,
    solve_futility_boundaries,
)
from gsdopt.errors import ConvergenceError, DesignValidationError, DomainError
from gsdopt.gauss import (
    POINTS_PER_STAGE,
    StageDistribution,
    StageProbabilities,
    normal_quantile,
    propagate,
)
from gsdopt.model import BoundarySet, InformationRates

logger = logging.getLogger(__name__)

DRIFT_XTOL = 1e-12


class Hypothesis(str, Enum):
    H0 = "h0"
    MID = "mid"
    H1 = "h1"


# -----------------------------
# Endpoints
# -----------------------------
@dataclass(frozen=True)
class ContinuousEndpoint:
    delta: float
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DesignValidationError("sigma must be positive", "endpoint.sigma")


@dataclass(frozen=True)
class BinaryEndpoint:
    p_control: float
    p_treatment: float

    def __post_init__(self):
        for name in ("p_control", "p_treatment"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise DesignValidationError("rates must lie in (0, 1)", f"endpoint.{name}")


@dataclass(frozen=True)
class EndpointSpec:
    kind: Union[ContinuousEndpoint, BinaryEndpoint]
    allocation_ratio: float = 1.0

    def __post_init__(self):
        if not self.allocation_ratio > 0:
            raise DesignValidationError("allocation ratio must be positive",
                                        "endpoint.allocation_ratio")

    @property
    def target_difference(self) -> float:
        k = self.kind
        if isinstance(k, ContinuousEndpoint):
            return k.delta
        return k.p_treatment - k.p_control

    def effect_ratio(self, under: Hypothesis) -> float:
        """Difference under ``under`` relative to the target difference."""
        under = Hypothesis(under)
        if under is Hypothesis.H1:
            return 1.0
        if under is Hypothesis.H0:
            return 0.0
        # half the target difference; for binary endpoints this is the midpoint
        # treatment rate (p_control + p_treatment) / 2
        return 0.5


def fixed_sample_size(endpoint: EndpointSpec, z_alpha: float, z_beta: float) -> float:
    """Total size N_0 of the single-analysis design."""
    r = endpoint.allocation_ratio
    k = endpoint.kind
    if isinstance(k, ContinuousEndpoint):
        if k.delta == 0:
            raise DomainError("target effect must be nonzero")
        return (k.sigma / k.delta) ** 2 * (1 + r) ** 2 / r * (z_alpha + z_beta) ** 2
    p0, p1 = k.p_control, k.p_treatment
    if p0 == p1:
        raise DomainError("treatment and control rates must differ")
    # pooled variance under H0, unpooled under H1; n0 is the control-arm size
    pbar = (p0 + r * p1) / (1 + r)
    s0 = math.sqrt(pbar * (1 - pbar) * (1 + 1 / r))
    s1 = math.sqrt(p0 * (1 - p0) + p1 * (1 - p1) / r)
    n0 = ((z_alpha * s0 + z_beta * s1) / (p1 - p0)) ** 2
    return (1 + r) * n0


def standardized_effect(endpoint: EndpointSpec, under: Hypothesis = Hypothesis.H1, *,
                        z_alpha: Optional[float] = None, z_beta: Optional[float] = None) -> float:
    """delta / sigma for continuous endpoints.

    Binary endpoints return the effect a continuous endpoint would need to
    give the same N_0, which depends on the error quantiles.
    """
    ratio = endpoint.effect_ratio(under)
    if ratio == 0.0:
        return 0.0
    k = endpoint.kind
    if isinstance(k, ContinuousEndpoint):
        return abs(k.delta) / k.sigma * ratio
    if z_alpha is None or z_beta is None:
        raise DomainError("binary standardized effect requires z_alpha and z_beta")
    r = endpoint.allocation_ratio
    n0 = fixed_sample_size(endpoint, z_alpha, z_beta)
    return (z_alpha + z_beta) * (1 + r) / math.sqrt(r * n0) * ratio


# -----------------------------
# Design specification
# -----------------------------
@dataclass(frozen=True)
class DesignSpec:
    stages: int
    alpha: float
    beta: float
    boundary_rule: BoundaryRule
    futility: FutilityRule = field(default_factory=FutilityRule)
    endpoint: EndpointSpec = field(
        default_factory=lambda: EndpointSpec(ContinuousEndpoint(0.5, 1.0)))
    rates: Optional[InformationRates] = None

    def __post_init__(self):
        if self.stages < 1:
            raise DesignValidationError("stages must be >= 1", "stages")
        if not 0 < self.alpha < 1:
            raise DesignValidationError("alpha must lie in (0, 1)", "alpha")
        if not 0 < self.beta < 1:
            raise DesignValidationError("beta must lie in (0, 1)", "beta")
        if not self.alpha + self.beta < 1:
            raise DesignValidationError("alpha + beta must be < 1", "beta")
        if self.rates is not None and self.rates.stages != self.stages:
            raise DesignValidationError(
                f"{self.rates.stages} rates given for {self.stages} stages", "rates")
        if self.futility.active and self.boundary_rule.two_sided:
            raise DesignValidationError("futility bounds are not supported for two-sided tests",
                                        "futility")

    @property
    def sidedness(self) -> Sidedness:
        return self.boundary_rule.sidedness

    @property
    def z_alpha(self) -> float:
        level = self.alpha / 2 if self.boundary_rule.two_sided else self.alpha
        return normal_quantile(1 - level)

    @property
    def z_beta(self) -> float:
        return normal_quantile(1 - self.beta)

    def with_rates(self, rates: Optional[InformationRates]) -> "DesignSpec":
        return replace(self, rates=rates)

    def require_rates(self) -> InformationRates:
        if self.rates is None:
            if self.stages == 1:
                return InformationRates((1.0,))
            raise DesignValidationError("information rates are required", "rates")
        return self.rates


# -----------------------------
# Drift and sizes
# -----------------------------
def drift_for_power(rates: InformationRates, bounds: BoundarySet, beta: float, *,
                    points: int = POINTS_PER_STAGE) -> float:
    """Drift theta at which the rejection probability equals 1 - beta.

    The root is first searched near the drift a single analysis at u_K would
    need, (u_K + z_{1-beta}) * sqrt(t_1), and then over the full bracket.
    """
    target = 1.0 - beta

    def shortfall(theta: float) -> float:
        probs = propagate(StageDistribution(rates, theta), bounds, points=points)
        return probs.rejection() - target

    reach = max(bounds.upper[-1], 0.0) + normal_quantile(target)
    guess = reach * math.sqrt(rates[0])
    for lo, hi in ((0.6 * guess, 1.5 * guess), (1e-6, 3.0 * reach)):
        try:
            return brentq(shortfall, lo, hi, xtol=DRIFT_XTOL, maxiter=200)
        except ValueError:
            logger.debug("drift not bracketed by [%.4f, %.4f]", lo, hi)
    raise ConvergenceError(f"drift bracket [1e-6, {3.0 * reach:.3f}] does not contain the root")


def solve_bounds(spec: DesignSpec, rates: InformationRates, *,
                 points: int = POINTS_PER_STAGE) -> Tuple[BoundarySet, float]:
    """Stopping bounds and H1 drift for ``spec`` at the given schedule."""
    efficacy = solve_efficacy_boundaries(spec.boundary_rule, rates, spec.alpha, points=points)
    if rates.stages == 1:
        return efficacy, spec.z_alpha + spec.z_beta
    bounds = solve_futility_boundaries(spec, rates, efficacy, points=points)
    return bounds, drift_for_power(rates, bounds, spec.beta, points=points)


def sample_sizes(spec: DesignSpec, theta: float,
                 rates: InformationRates) -> Tuple[float, float, Tuple[float, ...]]:
    if not theta > 0:
        raise DomainError(f"drift must be positive, got {theta!r}")
    za, zb = spec.z_alpha, spec.z_beta
    n_fixed = fixed_sample_size(spec.endpoint, za, zb)
    n_max = n_fixed * theta ** 2 / ((za + zb) ** 2 * rates[0])
    return n_fixed, n_max, tuple(t * n_max for t in rates)


def expected_sample_size(spec: DesignSpec, theta_under: float, rates: InformationRates,
                         bounds: BoundarySet, n_max: float, *,
                         points: int = POINTS_PER_STAGE) -> float:
    """ESS at drift ``theta_under``: sum_k N_k * P(stop at stage k)."""
    if rates.stages == 1:
        return n_max
    probs = propagate(StageDistribution(rates, theta_under), bounds, points=points)
    return _ess(probs, rates, n_max)


def _ess(probs: StageProbabilities, rates: InformationRates, n_max: float) -> float:
    if rates.stages == 1:
        return n_max
    return float(n_max * np.dot(rates.as_array(), probs.stopping))


# -----------------------------
# Operating characteristics
# -----------------------------
@dataclass(frozen=True, eq=False)
class OperatingCharacteristics:
    spec: DesignSpec
    rates: InformationRates
    boundaries: BoundarySet
    drift: float
    n_fixed: float
    n_max: float
    n_per_stage: Tuple[float, ...]
    exit_probs: Dict[Hypothesis, StageProbabilities]
    ess: Dict[Hypothesis, float]
    type1_error: float
    power: float

    @property
    def exit_probs_h0(self) -> StageProbabilities:
        return self.exit_probs[Hypothesis.H0]

    @property
    def exit_probs_mid(self) -> StageProbabilities:
        return self.exit_probs[Hypothesis.MID]

    @property
    def exit_probs_h1(self) -> StageProbabilities:
        return self.exit_probs[Hypothesis.H1]

    @property
    def ess_h0(self) -> float:
        return self.ess[Hypothesis.H0]

    @property
    def ess_mid(self) -> float:
        return self.ess[Hypothesis.MID]

    @property
    def ess_h1(self) -> float:
        return self.ess[Hypothesis.H1]

    @property
    def mif(self) -> float:
        return self.n_max / self.n_fixed

    def eif(self, under: Hypothesis) -> float:
        return self.ess[Hypothesis(under)] / self.n_fixed

    @property
    def eif_h0(self) -> float:
        return self.eif(Hypothesis.H0)

    @property
    def eif_mid(self) -> float:
        return self.eif(Hypothesis.MID)

    @property
    def eif_h1(self) -> float:
        return self.eif(Hypothesis.H1)


def characterize(spec: DesignSpec, *, points: int = POINTS_PER_STAGE) -> OperatingCharacteristics:
    rates = spec.require_rates()
    bounds, theta = solve_bounds(spec, rates, points=points)
    n_fixed, n_max, n_stage = sample_sizes(spec, theta, rates)
    if rates.stages == 1:
        n_max, n_stage = n_fixed, (n_fixed,)
    exits: Dict[Hypothesis, StageProbabilities] = {}
    ess: Dict[Hypothesis, float] = {}
    for h in Hypothesis:
        drift = theta * spec.endpoint.effect_ratio(h)
        exits[h] = propagate(StageDistribution(rates, drift), bounds, points=points)
        ess[h] = _ess(exits[h], rates, n_max)
    logger.info("characterized K=%d rates=%s: theta=%.6f n_max=%.2f ess_h1=%.2f",
                rates.stages, np.round(rates.values, 4), theta, n_max, ess[Hypothesis.H1])
    return OperatingCharacteristics(
        spec=spec,
        rates=rates,
        boundaries=bounds,
        drift=theta,
        n_fixed=n_fixed,
        n_max=n_max,
        n_per_stage=n_stage,
        exit_probs=exits,
        ess=ess,
        type1_error=exits[Hypothesis.H0].rejection(),
        power=exits[Hypothesis.H1].rejection(),
    )
