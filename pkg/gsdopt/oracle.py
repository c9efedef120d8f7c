"""Monte Carlo reference for exit probabilities and expected sample size.

Only the canonical process is simulated: independent score increments
dS_k ~ N(theta * dt_k / sqrt(t_1), dt_k), Z_k = S_k / sqrt(t_k). Paths are
drawn in batches, each with its own stream spawned from the seed, and
counts are summed in batch order so the result depends only on the seed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from gsdopt.errors import DesignValidationError
from gsdopt.gauss import StageDistribution
from gsdopt.model import BoundarySet

logger = logging.getLogger(__name__)

DEFAULT_PATHS = 1_000_000
BATCH_SIZE = 100_000

_BIT_GENERATORS = {
    "philox": np.random.Philox,
    "pcg64": np.random.PCG64,
}


@dataclass(frozen=True)
class SimConfig:
    paths: int = DEFAULT_PATHS
    seed: int = 20240101
    rng_kind: str = "philox"
    batch_size: int = BATCH_SIZE

    def __post_init__(self):
        if self.paths < 1:
            raise DesignValidationError("paths must be >= 1", "paths")
        if self.batch_size < 1:
            raise DesignValidationError("batch_size must be >= 1", "batch_size")
        if self.rng_kind not in _BIT_GENERATORS:
            raise DesignValidationError(f"unknown generator {self.rng_kind!r}", "rng_kind")

    def batches(self):
        sizes = [self.batch_size] * (self.paths // self.batch_size)
        if self.paths % self.batch_size:
            sizes.append(self.paths % self.batch_size)
        streams = np.random.SeedSequence(self.seed).spawn(len(sizes))
        bitgen = _BIT_GENERATORS[self.rng_kind]
        for size, ss in zip(sizes, streams):
            yield size, np.random.Generator(bitgen(ss))


@dataclass(frozen=True, eq=False)
class McExitProbabilities:
    """Exit frequencies per stage with binomial standard errors."""

    upper: np.ndarray
    lower_tail: np.ndarray
    futility: np.ndarray
    paths: int

    @property
    def efficacy(self) -> np.ndarray:
        return self.upper + self.lower_tail

    @property
    def stopping(self) -> np.ndarray:
        return self.efficacy + self.futility

    def se(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.sqrt(p * (1.0 - p) / self.paths)

    def rejection(self) -> float:
        return float(self.efficacy.sum())

    def rejection_se(self) -> float:
        return float(self.se(self.rejection()))

    def expected_sample_size(self, n_per_stage: Sequence[float]) -> Tuple[float, float]:
        """Mean sample size at stopping and its standard error."""
        sizes = _stage_sizes(n_per_stage, len(self.upper))
        share = self.stopping
        mean = float(np.dot(share, sizes))
        var = float(np.dot(share, (sizes - mean) ** 2))
        return mean, math.sqrt(var / self.paths)


def _stage_sizes(n_per_stage: Sequence[float], stages: int) -> np.ndarray:
    sizes = np.asarray(n_per_stage, dtype=float)
    if sizes.size != stages:
        raise DesignValidationError("n_per_stage does not match the number of stages",
                                    "n_per_stage")
    return sizes


def _simulate_counts(dist: StageDistribution, bounds: BoundarySet,
                     cfg: SimConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    bounds.check_stages(dist.rates.values)
    t = dist.rates.as_array()
    dt = np.diff(np.concatenate(([0.0], t)))
    mean = dist.drift * dt / math.sqrt(t[0])
    sd = np.sqrt(dt)
    root_t = np.sqrt(t)
    n = len(t)
    upper = np.zeros(n, dtype=np.int64)
    lower_tail = np.zeros(n, dtype=np.int64)
    futility = np.zeros(n, dtype=np.int64)
    for size, rng in cfg.batches():
        z = np.cumsum(rng.standard_normal((size, n)) * sd + mean, axis=1) / root_t
        alive = np.ones(size, dtype=bool)
        for k in range(n):
            lo, hi = bounds.continuation(k)
            up = alive & (z[:, k] >= hi)
            upper[k] += up.sum()
            stop = up
            if bounds.two_sided:
                low = alive & (z[:, k] <= lo)
                lower_tail[k] += low.sum()
                stop = stop | low
            if k == n - 1:
                futility[k] += (alive & ~stop).sum()
                break
            if bounds.has_futility:
                fut = alive & (z[:, k] <= lo)
                futility[k] += fut.sum()
                stop = stop | fut
            alive &= ~stop
    return upper, lower_tail, futility


def mc_exit_probabilities(dist: StageDistribution, bounds: BoundarySet,
                          cfg: SimConfig = SimConfig()) -> McExitProbabilities:
    upper, lower_tail, futility = _simulate_counts(dist, bounds, cfg)
    m = float(cfg.paths)
    logger.debug("simulated %d paths at drift %.6f", cfg.paths, dist.drift)
    return McExitProbabilities(upper / m, lower_tail / m, futility / m, cfg.paths)


def mc_expected_sample_size(dist: StageDistribution, bounds: BoundarySet,
                            n_per_stage: Sequence[float],
                            cfg: SimConfig = SimConfig()) -> Tuple[float, float]:
    """Mean sample size at stopping and its standard error."""
    _stage_sizes(n_per_stage, bounds.stages)
    return mc_exit_probabilities(dist, bounds, cfg).expected_sample_size(n_per_stage)
