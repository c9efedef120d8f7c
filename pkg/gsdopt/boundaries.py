"""Spending functions, classical boundary families and the bound solvers."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from gsdopt.errors import (
    CappedBoundaryWarning,
    ConvergenceError,
    DesignValidationError,
    DomainError,
    InfeasibleDesignError,
)
from gsdopt.gauss import POINTS_PER_STAGE, StageDistribution, StageRecursion, propagate
from gsdopt.model import BoundarySet, InformationRates

if TYPE_CHECKING:  # pragma: no cover
    from gsdopt.design import DesignSpec

logger = logging.getLogger(__name__)

Z_CAP = 10.0
HP_INTERIM_BOUND = 3.0
MIN_INCREMENT = 1e-15
FIXED_POINT_TOL = 1e-8
FIXED_POINT_MAX_ITER = 100


class Family(str, Enum):
    HAYBITTLE_PETO = "haybittle-peto"
    POCOCK = "pocock"
    OBRIEN_FLEMING = "obf"
    KIM_DEMETS = "kim-demets"
    HWANG_SHIH_DECANI = "hsd"
    CUSTOM = "custom"
    POCOCK_CLASSICAL = "pocock-classical"
    OBRIEN_FLEMING_CLASSICAL = "obf-classical"


SPENDING_FAMILIES = frozenset({Family.POCOCK, Family.OBRIEN_FLEMING, Family.KIM_DEMETS,
                               Family.HWANG_SHIH_DECANI, Family.CUSTOM})


class Sidedness(str, Enum):
    ONE_SIDED = "one-sided"
    TWO_SIDED = "two-sided"


class FutilityMode(str, Enum):
    NONE = "none"
    BINDING = "binding"
    NON_BINDING = "non-binding"


@dataclass(frozen=True)
class BoundaryRule:
    """Boundary family plus its shape parameter.

    ``table`` (custom spending) holds (t, fraction of the level spent) pairs;
    it must be nondecreasing and end at (1, 1).
    """

    family: Family
    sidedness: Sidedness = Sidedness.ONE_SIDED
    rho: Optional[float] = None
    gamma: Optional[float] = None
    table: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "sidedness", Sidedness(self.sidedness))
        if self.family is Family.KIM_DEMETS and not (self.rho is not None and self.rho > 0):
            raise DesignValidationError("kim-demets requires rho > 0", "boundary.rho")
        if self.family is Family.HWANG_SHIH_DECANI and not self.gamma:
            raise DesignValidationError("hsd requires gamma != 0", "boundary.gamma")
        if self.family is Family.CUSTOM:
            self._check_table()

    def _check_table(self):
        if not self.table:
            raise DesignValidationError("custom spending requires a table", "boundary.table")
        table = tuple((float(t), float(s)) for t, s in self.table)
        ts = [t for t, _ in table]
        ss = [s for _, s in table]
        if any(b < a for a, b in zip(ts, ts[1:])) or any(b < a for a, b in zip(ss, ss[1:])):
            raise DesignValidationError("custom spending table must be nondecreasing",
                                        "boundary.table")
        if ts[0] < 0 or ss[0] < 0:
            raise DesignValidationError("custom spending table must start >= 0", "boundary.table")
        if abs(ts[-1] - 1.0) > 1e-12 or abs(ss[-1] - 1.0) > 1e-12:
            raise DesignValidationError("custom spending table must end at (1, 1)",
                                        "boundary.table")
        object.__setattr__(self, "table", table)

    @property
    def is_spending(self) -> bool:
        return self.family in SPENDING_FAMILIES

    @property
    def two_sided(self) -> bool:
        return self.sidedness is Sidedness.TWO_SIDED


@dataclass(frozen=True)
class FutilityRule:
    mode: FutilityMode = FutilityMode.NONE
    spending: Optional[BoundaryRule] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", FutilityMode(self.mode))
        if self.mode is FutilityMode.NONE and self.spending is not None:
            raise DesignValidationError("futility spending given but mode is none", "futility")
        if self.mode is not FutilityMode.NONE:
            if self.spending is None or not self.spending.is_spending:
                raise DesignValidationError("futility requires a beta-spending family",
                                            "futility.family")

    @property
    def active(self) -> bool:
        return self.mode is not FutilityMode.NONE

    @classmethod
    def for_efficacy(cls, mode: FutilityMode, efficacy: BoundaryRule, *,
                     family: Optional[Family] = None, rho: Optional[float] = None,
                     gamma: Optional[float] = None,
                     table: Optional[Sequence[Tuple[float, float]]] = None) -> "FutilityRule":
        """Futility rule for ``mode`` with beta spending derived from ``efficacy``.

        Without an explicit ``family`` the efficacy family and its shape
        parameters are reused. Haybittle-Peto and the classical families do not
        spend, so they get OBF-type beta spending.
        """
        mode = FutilityMode(mode)
        if mode is FutilityMode.NONE:
            return cls()
        if family is None:
            if efficacy.is_spending:
                family = efficacy.family
                rho = efficacy.rho if rho is None else rho
                gamma = efficacy.gamma if gamma is None else gamma
                table = efficacy.table if table is None else table
            else:
                family = Family.OBRIEN_FLEMING
        table = tuple(map(tuple, table)) if table else None
        return cls(mode, BoundaryRule(family, Sidedness.ONE_SIDED, rho, gamma, table))


# -----------------------------
# Spending functions
# -----------------------------
def cumulative_spend(rule: BoundaryRule, level: float, t: float) -> float:
    """Error spent up to information fraction ``t`` for a total of ``level``."""
    if not 0.0 < t <= 1.0:
        raise DomainError(f"information fraction must lie in (0, 1], got {t!r}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level!r}")
    if not rule.is_spending:
        raise DesignValidationError(f"{rule.family.value} is not a spending family",
                                    "boundary.family")
    if t == 1.0:
        return level
    fam = rule.family
    if fam is Family.OBRIEN_FLEMING:
        z = -float(ndtri(level / 2.0))
        return float(2.0 * ndtr(-z / math.sqrt(t)))
    if fam is Family.POCOCK:
        return level * math.log1p((math.e - 1.0) * t)
    if fam is Family.KIM_DEMETS:
        return level * t ** rule.rho
    if fam is Family.HWANG_SHIH_DECANI:
        g = rule.gamma
        return level * math.expm1(-g * t) / math.expm1(-g)
    ts, ss = zip(*rule.table)
    return level * float(np.interp(t, (0.0,) + ts, (0.0,) + ss))


def spend_increments(rule: BoundaryRule, level: float, rates: InformationRates) -> np.ndarray:
    cum = np.array([cumulative_spend(rule, level, t) for t in rates])
    return np.diff(np.concatenate(([0.0], cum)))


# -----------------------------
# Efficacy bounds
# -----------------------------
def _per_tail(rule: BoundaryRule, alpha: float) -> float:
    return alpha / 2.0 if rule.two_sided else alpha


def _continuation(k: int, upper: Sequence[float], lower: Optional[Sequence[float]],
                  two_sided: bool) -> Tuple[float, float]:
    if two_sided:
        return -upper[k], upper[k]
    return (lower[k] if lower is not None else -np.inf), upper[k]


def _root(fn, lo: float, hi: float, what: str) -> float:
    try:
        return brentq(fn, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, RuntimeError) as e:
        raise ConvergenceError(f"root finder failed for {what}: {e}") from e


def _solve_stagewise(rates: InformationRates, increments: Sequence[float], two_sided: bool,
                     lower: Optional[Sequence[float]], points: int) -> List[float]:
    rec = StageRecursion(rates, 0.0, points)
    upper: List[float] = []
    prev = None
    for k, target in enumerate(increments):
        if target <= MIN_INCREMENT:
            warnings.warn(f"spend increment {target:.3e} at stage {k + 1} underflows; "
                          f"bound capped at z = {Z_CAP}", CappedBoundaryWarning, stacklevel=3)
            u = Z_CAP
        else:
            fn = lambda c, p=prev, k=k, a=target: rec.tail_above(p, k, c) - a  # noqa: E731
            if fn(Z_CAP) >= 0.0:
                warnings.warn(f"spend increment {target:.3e} at stage {k + 1} below the tail at "
                              f"z = {Z_CAP}; bound capped", CappedBoundaryWarning, stacklevel=3)
                u = Z_CAP
            else:
                lo = 0.0 if two_sided else -Z_CAP
                if fn(lo) < 0.0:
                    raise InfeasibleDesignError(
                        f"spend increment {target:.4g} at stage {k + 1} exceeds the reachable mass")
                u = _root(fn, lo, Z_CAP, f"efficacy bound at stage {k + 1}")
        upper.append(u)
        if k < len(increments) - 1:
            prev = rec.advance(prev, k, *_continuation(k, upper, lower, two_sided))
    return upper


def _solve_haybittle_peto(rates: InformationRates, level: float, two_sided: bool,
                          lower: Optional[Sequence[float]], points: int) -> List[float]:
    rec = StageRecursion(rates, 0.0, points)
    upper = [HP_INTERIM_BOUND] * (rates.stages - 1)
    spent = 0.0
    prev = None
    for k in range(rates.stages - 1):
        spent += rec.tail_above(prev, k, upper[k])
        prev = rec.advance(prev, k, *_continuation(k, upper, lower, two_sided))
    k = rates.stages - 1
    remaining = level - spent
    if remaining <= 0.0:
        raise InfeasibleDesignError(
            f"interim bounds at z = {HP_INTERIM_BOUND} already spend {spent:.4g} > {level:.4g}")
    fn = lambda c: rec.tail_above(prev, k, c) - remaining  # noqa: E731
    upper.append(_root(fn, 0.0 if two_sided else -Z_CAP, Z_CAP, "final Haybittle-Peto bound"))
    return upper


def _classical_shape(rule: BoundaryRule, rates: InformationRates) -> np.ndarray:
    t = rates.as_array()
    if rule.family is Family.POCOCK_CLASSICAL:
        return np.ones_like(t)
    return 1.0 / np.sqrt(t)


def _solve_classical(rule: BoundaryRule, rates: InformationRates, level: float,
                     lower: Optional[Sequence[float]], points: int) -> List[float]:
    shape = _classical_shape(rule, rates)
    null = StageDistribution(rates, 0.0)

    def excess(c: float) -> float:
        upper = tuple(c * shape)
        bounds = BoundarySet(upper, None if lower is None else tuple(lower[:-1]) + (upper[-1],),
                             rule.two_sided)
        return float(propagate(null, bounds, points=points).upper.sum()) - level

    c = _root(excess, 0.5, Z_CAP, f"{rule.family.value} constant")
    return list(c * shape)


def solve_efficacy_boundaries(rule: BoundaryRule, rates: InformationRates, alpha: float, *,
                              lower: Optional[Sequence[float]] = None,
                              points: int = POINTS_PER_STAGE) -> BoundarySet:
    """Efficacy bounds reproducing ``alpha`` under theta = 0.

    ``lower`` (binding futility) restricts the null continuation regions to
    (l_k, u_k). Two-sided rules spend alpha / 2 per tail with symmetric bounds.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if lower is not None and rule.two_sided:
        raise DesignValidationError("futility bounds are not supported for two-sided tests",
                                    "futility")
    level = _per_tail(rule, alpha)
    if rule.family is Family.HAYBITTLE_PETO:
        upper = _solve_haybittle_peto(rates, level, rule.two_sided, lower, points)
    elif rule.is_spending:
        upper = _solve_stagewise(rates, spend_increments(rule, level, rates), rule.two_sided,
                                 lower, points)
    else:
        upper = _solve_classical(rule, rates, level, lower, points)
    logger.debug("efficacy bounds %s for rates %s", np.round(upper, 4), rates.values)
    if lower is None:
        return BoundarySet(tuple(upper), None, rule.two_sided)
    for k in range(rates.stages - 1):
        if lower[k] >= upper[k]:
            raise InfeasibleDesignError(f"futility bound crosses efficacy bound at stage {k + 1}")
    return BoundarySet(tuple(upper), tuple(lower[:-1]) + (upper[-1],), rule.two_sided)


# -----------------------------
# Futility bounds
# -----------------------------
def _futility_bounds(rates: InformationRates, upper: Sequence[float], theta: float,
                     rule: BoundaryRule, beta: float, points: int) -> List[float]:
    increments = spend_increments(rule, beta, rates)
    rec = StageRecursion(rates, theta, points)
    lower: List[float] = []
    prev = None
    for k in range(rates.stages - 1):
        target = increments[k]
        fn = lambda c, p=prev, k=k, b=target: rec.tail_below(p, k, c) - b  # noqa: E731
        if target <= MIN_INCREMENT or fn(-Z_CAP) >= 0.0:
            lo = -Z_CAP
        else:
            if fn(upper[k]) <= 0.0:
                raise InfeasibleDesignError(
                    f"futility bound crosses efficacy bound at stage {k + 1}")
            lo = _root(fn, -Z_CAP, upper[k], f"futility bound at stage {k + 1}")
        lower.append(lo)
        prev = rec.advance(prev, k, lo, upper[k])
    lower.append(upper[-1])
    return lower


def solve_futility_boundaries(spec: "DesignSpec", rates: InformationRates,
                              efficacy: BoundarySet, *,
                              points: int = POINTS_PER_STAGE) -> BoundarySet:
    """Beta-spending futility bounds under the H1 drift.

    The drift depends on the bounds, so bounds and drift are iterated to a
    fixed point. Binding designs re-solve the efficacy bounds with the null
    continuation regions (l_k, u_k) each round; non-binding designs keep the
    futility-free efficacy bounds.
    """
    from gsdopt.design import drift_for_power

    futility = spec.futility
    if not futility.active:
        return efficacy.efficacy_only()
    if spec.boundary_rule.two_sided:
        raise DesignValidationError("futility bounds are not supported for two-sided tests",
                                    "futility")
    binding = futility.mode is FutilityMode.BINDING
    bounds = efficacy.efficacy_only()
    theta = drift_for_power(rates, bounds, spec.beta, points=points)
    for it in range(FIXED_POINT_MAX_ITER):
        lower = _futility_bounds(rates, bounds.upper, theta, futility.spending, spec.beta, points)
        if binding:
            bounds = solve_efficacy_boundaries(spec.boundary_rule, rates, spec.alpha,
                                               lower=lower, points=points)
        else:
            bounds = BoundarySet(efficacy.upper, tuple(lower))
        new_theta = drift_for_power(rates, bounds, spec.beta, points=points)
        logger.debug("futility iteration %d: theta %.10f -> %.10f", it + 1, theta, new_theta)
        if abs(new_theta - theta) < FIXED_POINT_TOL:
            return bounds
        theta = new_theta
    raise ConvergenceError(
        f"futility bounds did not converge within {FIXED_POINT_MAX_ITER} iterations")
