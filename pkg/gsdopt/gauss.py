"""Normal primitives and the recursive integration engine.

The canonical sequential statistics satisfy Z_k = S_k / sqrt(t_k) where S is a
Brownian motion with drift theta / sqrt(t_1) observed at the information
rates, so E[Z_k] = theta * sqrt(t_k / t_1) and corr(Z_j, Z_k) = sqrt(t_j / t_k).
Stage probabilities are obtained by pushing the sub-density of paths that have
not stopped forward one stage at a time on a Simpson grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from gsdopt.errors import DomainError, GridResolutionError
from gsdopt.model import BoundarySet, InformationRates

logger = logging.getLogger(__name__)

HALF_WIDTH = 6.5
POINTS_PER_STAGE = 301
# grid spacing is kept below (transition sd / KERNEL_RESOLUTION)
KERNEL_RESOLUTION = 16.0
MAX_POINTS = 4001
NORMALIZATION_TOL = 1e-8

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# -----------------------------
# Standard normal
# -----------------------------
def normal_cdf(x: float) -> float:
    return float(ndtr(x))


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile requires 0 < p < 1, got {p!r}")
    return float(ndtri(p))


# -----------------------------
# Model
# -----------------------------
@dataclass(frozen=True)
class StageDistribution:
    rates: InformationRates
    drift: float = 0.0

    def means(self) -> np.ndarray:
        t = self.rates.as_array()
        return self.drift * np.sqrt(t / t[0])

    def covariance(self) -> np.ndarray:
        t = self.rates.as_array()
        return np.sqrt(np.minimum.outer(t, t) / np.maximum.outer(t, t))


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    half_width: float
    points_per_stage: int

    @classmethod
    def simpson(cls, lo: float, hi: float, spacing: float,
                half_width: float = HALF_WIDTH) -> "QuadratureGrid":
        """Composite Simpson rule on [lo, hi] with spacing at most ``spacing``."""
        if not hi - lo > 1e-12:
            return cls(np.empty(0), np.empty(0), half_width, 0)
        n = 2 * math.ceil((hi - lo) / (2.0 * spacing)) + 1
        n = min(max(n, 3), MAX_POINTS)
        nodes = np.linspace(lo, hi, n)
        h = (hi - lo) / (n - 1)
        weights = np.full(n, 2.0)
        weights[1::2] = 4.0
        weights[0] = weights[-1] = 1.0
        return cls(nodes, weights * h / 3.0, half_width, n)

    @property
    def empty(self) -> bool:
        return self.points_per_stage == 0

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values)) if not self.empty else 0.0


@dataclass(frozen=True, eq=False)
class SubDensity:
    """Density of Z_k restricted to paths still running after stage k."""

    stage: int
    grid: QuadratureGrid
    values: np.ndarray

    def mass(self) -> float:
        return self.grid.integrate(self.values)


@dataclass(frozen=True, eq=False)
class StageProbabilities:
    """First-exit probabilities per stage.

    ``upper``: Z_k >= u_k. ``lower_tail``: Z_k <= -u_k (two-sided rejection).
    ``futility``: Z_k < l_k at interims; at the final stage the mass that does
    not reject. ``continuation``: mass still running after stage k.
    """

    upper: np.ndarray
    lower_tail: np.ndarray
    futility: np.ndarray
    continuation: np.ndarray

    @property
    def efficacy(self) -> np.ndarray:
        return self.upper + self.lower_tail

    @property
    def stopping(self) -> np.ndarray:
        return self.efficacy + self.futility

    def total(self) -> float:
        return float(self.stopping.sum())

    def rejection(self) -> float:
        return float(self.efficacy.sum())


# -----------------------------
# Recursion
# -----------------------------
class StageRecursion:
    """One-stage-at-a-time transition kernel for a fixed drift.

    Boundary solvers walk stages with it directly so earlier bounds never need
    to be recomputed while a later bound is searched.
    """

    def __init__(self, rates: InformationRates, drift: float,
                 points: int = POINTS_PER_STAGE, resolution: float = 1.0):
        self.t = rates.as_array()
        self.drift = float(drift)
        self.points = points
        self.resolution = resolution
        self._base = 2.0 * HALF_WIDTH / (points - 1)

    @property
    def stages(self) -> int:
        return len(self.t)

    def mean(self, k: int) -> float:
        return self.drift * math.sqrt(self.t[k] / self.t[0])

    def spacing(self, k: int) -> float:
        t = self.t
        h = self._base
        if k > 0:
            h = min(h, math.sqrt((t[k] - t[k - 1]) / t[k]) / KERNEL_RESOLUTION)
        if k < len(t) - 1:
            h = min(h, math.sqrt((t[k + 1] - t[k]) / t[k]) / KERNEL_RESOLUTION)
        return h / self.resolution

    def _standardize(self, prev: SubDensity, k: int, c: float) -> np.ndarray:
        # (c - E[Z_k | z_j]) / sd(Z_k | z_j), rescaled to the score scale
        t = self.t
        dt = t[k] - t[k - 1]
        shift = self.drift * dt / math.sqrt(t[0])
        return (c * math.sqrt(t[k]) - prev.grid.nodes * math.sqrt(t[k - 1]) - shift) / math.sqrt(dt)

    def tail_above(self, prev: Optional[SubDensity], k: int, c: float) -> float:
        """P(no stop before stage k, Z_k >= c)."""
        if k == 0:
            return float(ndtr(self.drift - c))
        if prev.grid.empty:
            return 0.0
        arg = self._standardize(prev, k, c)
        return float(np.dot(prev.grid.weights * prev.values, ndtr(-arg)))

    def tail_below(self, prev: Optional[SubDensity], k: int, c: float) -> float:
        """P(no stop before stage k, Z_k <= c)."""
        if k == 0:
            return float(ndtr(c - self.drift))
        if prev.grid.empty:
            return 0.0
        arg = self._standardize(prev, k, c)
        return float(np.dot(prev.grid.weights * prev.values, ndtr(arg)))

    def advance(self, prev: Optional[SubDensity], k: int, lo: float, hi: float) -> SubDensity:
        """Sub-density of Z_k over the continuation interval (lo, hi)."""
        m = self.mean(k)
        a, b = max(lo, m - HALF_WIDTH), min(hi, m + HALF_WIDTH)
        if prev is not None and prev.grid.empty:
            a = b
        grid = QuadratureGrid.simpson(a, b, self.spacing(k))
        if grid.empty:
            return SubDensity(k, grid, np.empty(0))
        z = grid.nodes
        if k == 0:
            values = _INV_SQRT_2PI * np.exp(-0.5 * (z - m) ** 2)
            return SubDensity(k, grid, values)
        t = self.t
        dt = t[k] - t[k - 1]
        sd = math.sqrt(dt)
        shift = self.drift * dt / math.sqrt(t[0])
        d = (z[:, None] * math.sqrt(t[k])
             - prev.grid.nodes[None, :] * math.sqrt(t[k - 1]) - shift) / sd
        kernel = np.exp(-0.5 * d * d) * (_INV_SQRT_2PI * math.sqrt(t[k]) / sd)
        values = kernel @ (prev.grid.weights * prev.values)
        return SubDensity(k, grid, values)


def _propagate_once(dist: StageDistribution, bounds: BoundarySet,
                    points: int, resolution: float) -> StageProbabilities:
    rec = StageRecursion(dist.rates, dist.drift, points, resolution)
    n = rec.stages
    upper, lower_tail, futility, cont = (np.zeros(n) for _ in range(4))
    prev = None
    for k in range(n):
        lo, hi = bounds.continuation(k)
        upper[k] = rec.tail_above(prev, k, hi)
        if bounds.two_sided:
            lower_tail[k] = rec.tail_below(prev, k, lo)
        if k == n - 1:
            below_hi = rec.tail_below(prev, k, hi)
            futility[k] = below_hi - lower_tail[k] if bounds.two_sided else below_hi
            break
        if bounds.has_futility:
            futility[k] = rec.tail_below(prev, k, lo)
        prev = rec.advance(prev, k, lo, hi)
        cont[k] = prev.mass()
    clip = lambda a: np.clip(a, 0.0, 1.0)  # noqa: E731
    return StageProbabilities(clip(upper), clip(lower_tail), clip(futility), clip(cont))


def propagate(dist: StageDistribution, bounds: BoundarySet, *,
              points: int = POINTS_PER_STAGE) -> StageProbabilities:
    """Stagewise exit probabilities of ``bounds`` under ``dist``.

    The grid is refined once (spacing halved) when the probabilities do not
    sum to one within NORMALIZATION_TOL.
    """
    bounds.check_stages(dist.rates.values)
    error = math.nan
    for resolution in (1.0, 2.0):
        probs = _propagate_once(dist, bounds, points, resolution)
        error = abs(probs.total() - 1.0)
        if error <= NORMALIZATION_TOL:
            return probs
        logger.debug("normalization error %.3e at resolution %.0f, refining", error, resolution)
    raise GridResolutionError(
        f"stage probabilities sum to 1 only within {error:.3e} after grid refinement")
