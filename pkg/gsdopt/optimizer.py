"""Interim timing search: minimize the expected sample size under H1.

Schedules are searched in an unconstrained coordinate system (see ``decode``)
with a multi-start Nelder-Mead simplex. Starts come from a fixed grid of
schedules, so runs are reproducible; later sweeps restart around the best
schedule found so far until the improvement stalls.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gsdopt.design import DesignSpec, fixed_sample_size, solve_bounds
from gsdopt.errors import (
    CappedBoundaryWarning,
    DesignValidationError,
    DomainError,
    GsdError,
    InfeasibleDesignError,
)
from gsdopt.gauss import POINTS_PER_STAGE, StageDistribution, propagate
from gsdopt.model import InformationRates

logger = logging.getLogger(__name__)

MIN_INCREMENT = 1e-3
RESERVED_INCREMENT = MIN_INCREMENT + math.log(2.0)
COORD_CLIP = 60.0
CACHE_DIGITS = 10
PERTURBATION = 0.05
RESTART_GRID = ("equal", "early", "late", "sqrt", "square")


# -----------------------------
# Coordinates
# -----------------------------
def decode(x: Sequence[float]) -> InformationRates:
    """Map any finite vector of length K-1 to a strictly increasing schedule.

    Each coordinate becomes a positive increment MIN_INCREMENT + softplus(x_i);
    a reserved final increment keeps t_{K-1} below 1. The zero vector decodes
    to equal spacing.
    """
    x = np.clip(np.asarray(x, dtype=float), -COORD_CLIP, COORD_CLIP)
    inc = MIN_INCREMENT + np.logaddexp(0.0, x)
    inc = np.append(inc, RESERVED_INCREMENT)
    t = np.cumsum(inc) / inc.sum()
    return InformationRates(tuple(t))


def encode(rates: InformationRates) -> np.ndarray:
    if not isinstance(rates, InformationRates):
        rates = InformationRates(tuple(rates))
    t = rates.as_array()
    inc = np.diff(np.concatenate(([0.0], t)))
    inc = inc * (RESERVED_INCREMENT / inc[-1]) - MIN_INCREMENT
    if np.any(inc[:-1] <= 0.0):
        raise DomainError(f"schedule {rates.values} has an interim spacing too small to encode")
    return np.log(np.expm1(inc[:-1]))


# -----------------------------
# Objective
# -----------------------------
def ess_scale(spec: DesignSpec) -> float:
    """Subjects per unit of the scale-free objective."""
    z = spec.z_alpha + spec.z_beta
    return fixed_sample_size(spec.endpoint, spec.z_alpha, spec.z_beta) / z ** 2


def objective(spec: DesignSpec, rates: InformationRates, *,
              points: int = POINTS_PER_STAGE) -> float:
    """Scale-free ESS under H1: theta^2 (1 + sum (t_k - t_{k-1}) / t_1 * P(continue past k-1)).

    Returns +inf when the bounds or the drift cannot be solved.
    """
    if rates.stages == 1:
        return (spec.z_alpha + spec.z_beta) ** 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CappedBoundaryWarning)
            bounds, theta = solve_bounds(spec.with_rates(rates), rates, points=points)
            probs = propagate(StageDistribution(rates, theta), bounds, points=points)
    except GsdError as e:
        logger.debug("objective infeasible at %s: %s", rates.values, e)
        return math.inf
    t = rates.as_array()
    weights = np.diff(t) / t[0]
    return float(theta ** 2 * (1.0 + np.dot(weights, probs.continuation[:-1])))


class CachedObjective:
    """Objective over unconstrained coordinates, memoized on the decoded schedule.

    Values are computed at the rounded schedule used as the key. One instance
    serves every restart and sweep of an ``optimize_rates`` call, or one per
    worker process when restarts run in a pool.
    """

    def __init__(self, spec: DesignSpec, points: int = POINTS_PER_STAGE):
        self.spec = spec
        self.points = points
        self.cache: Dict[Tuple[float, ...], float] = {}
        self.evaluations = 0

    def __call__(self, x: np.ndarray) -> float:
        key = tuple(round(v, CACHE_DIGITS) for v in decode(x).interims)
        if key not in self.cache:
            self.evaluations += 1
            rates = InformationRates.from_interims(key)
            self.cache[key] = objective(self.spec, rates, points=self.points)
        return self.cache[key]


# -----------------------------
# Simplex
# -----------------------------
@dataclass(frozen=True)
class OptimConfig:
    simplex_tolerance: float = 1e-8
    max_evals: Optional[int] = None
    restart_grid: Tuple[str, ...] = RESTART_GRID
    improvement_epsilon: float = 1e-7
    initial_step: float = 0.5
    # later sweeps refine around the incumbent with a smaller simplex
    refine_step: float = 0.1
    xtol: float = 1e-4
    max_sweeps: int = 10
    workers: int = 1
    points: int = POINTS_PER_STAGE

    def __post_init__(self):
        if not self.simplex_tolerance > 0:
            raise DesignValidationError("simplex_tolerance must be > 0",
                                        "optimizer.simplex_tolerance")
        if not self.improvement_epsilon >= 0:
            raise DesignValidationError("improvement_epsilon must be >= 0",
                                        "optimizer.improvement_epsilon")
        if self.max_evals is not None and self.max_evals < 1:
            raise DesignValidationError("max_evals must be positive", "optimizer.max_evals")
        unknown = set(self.restart_grid) - set(RESTART_GRID)
        if unknown or "equal" not in self.restart_grid:
            raise DesignValidationError(
                f"restart grid must include 'equal' and only use {RESTART_GRID}",
                "optimizer.restart_grid")
        if not (self.initial_step > 0 and self.refine_step > 0):
            raise DesignValidationError("simplex steps must be > 0", "optimizer")
        if self.workers < 1 or self.max_sweeps < 1:
            raise DesignValidationError("workers and max_sweeps must be >= 1", "optimizer")

    def evals_for(self, stages: int) -> int:
        return self.max_evals if self.max_evals is not None else 2000 * max(stages - 1, 1)


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    value: float
    evaluations: int
    converged: bool


def nelder_mead(f: Callable[[np.ndarray], float], start: Sequence[float],
                config: OptimConfig = OptimConfig(), *,
                max_evals: Optional[int] = None, step: Optional[float] = None) -> SimplexResult:
    """Minimize ``f`` from ``start``.

    Coefficients: reflection 1, expansion 2, contractions 0.5, shrink 0.5.
    Stops once the objective spread across the simplex falls below
    ``simplex_tolerance`` relative to the best value, once the simplex
    collapses below ``xtol``, or when the evaluation budget is spent.
    """
    x0 = np.asarray(start, dtype=float)
    dim = x0.size
    budget = max_evals if max_evals is not None else config.evals_for(dim + 1)
    evals = 0

    def call(x: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        v = f(x)
        return v if np.isfinite(v) else math.inf

    step = config.initial_step if step is None else step
    simplex = [x0] + [x0 + step * e for e in np.eye(dim)]
    values = [call(x) for x in simplex]
    converged = False
    while evals < budget:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        best, worst = values[0], values[-1]
        spread = worst - best
        if np.isfinite(best) and spread <= config.simplex_tolerance * abs(best) + 1e-14:
            converged = True
            break
        if max(np.max(np.abs(x - simplex[0])) for x in simplex[1:]) <= config.xtol:
            converged = True
            break

        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = call(xr)
        if fr < best:
            xe = centroid + 2.0 * (xr - centroid)
            fe = call(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < worst:
            xc = centroid + 0.5 * (xr - centroid)
            fc = call(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = call(xc)
            if fc < worst:
                simplex[-1], values[-1] = xc, fc
                continue
        # shrink toward the best vertex
        for i in range(1, dim + 1):
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
            values[i] = call(simplex[i])

    i = int(np.argmin(values))
    return SimplexResult(simplex[i], values[i], evals, converged)


# -----------------------------
# Multi-start search
# -----------------------------
@dataclass(frozen=True)
class RestartRecord:
    sweep: int
    label: str
    start: Tuple[float, ...]
    rates: Tuple[float, ...]
    value: float
    evaluations: int
    converged: bool


@dataclass(frozen=True)
class OptimResult:
    rates: InformationRates
    objective: float
    ess_h1: float
    evaluations: int
    restarts_used: int
    converged: bool
    per_restart_log: Tuple[RestartRecord, ...] = field(default=())


def grid_schedules(stages: int,
                   grid: Sequence[str] = RESTART_GRID) -> List[Tuple[str, InformationRates]]:
    base = np.arange(1, stages) / stages
    shapes = {
        "equal": base,
        "early": 0.6 * base,
        "late": 0.4 + 0.6 * base,
        "sqrt": np.sqrt(base),
        "square": base ** 2,
    }
    return [(name, InformationRates.from_interims(shapes[name])) for name in grid]


def perturbed_schedules(rates: InformationRates) -> List[Tuple[str, InformationRates]]:
    """The schedule itself plus four deterministic +-0.05 perturbations."""
    t = np.asarray(rates.interims)
    signs = {
        "best": np.zeros_like(t),
        "up": np.ones_like(t),
        "down": -np.ones_like(t),
        "alt+": np.where(np.arange(t.size) % 2 == 0, 1.0, -1.0),
        "alt-": np.where(np.arange(t.size) % 2 == 0, -1.0, 1.0),
    }
    out = []
    for name, s in signs.items():
        cand = np.clip(t + PERTURBATION * s, 0.01, 0.99)
        try:
            sched = InformationRates.from_interims(cand)
            encode(sched)
        except GsdError:
            continue
        out.append((name, sched))
    return out


def _run_restart(f: CachedObjective, config: OptimConfig, sweep: int, label: str,
                 start: InformationRates) -> RestartRecord:
    step = config.initial_step if sweep == 1 else config.refine_step
    res = nelder_mead(f, encode(start), config, max_evals=config.evals_for(f.spec.stages),
                      step=step)
    rates = decode(res.x)
    return RestartRecord(sweep, label, start.values, rates.values, res.value,
                         res.evaluations, res.converged)


# per-process objective for pooled restarts, set by the pool initializer
_worker_objective: Optional[CachedObjective] = None


def _init_worker(spec: DesignSpec, points: int) -> None:
    global _worker_objective
    _worker_objective = CachedObjective(spec, points)


def _run_pooled_restart(config: OptimConfig, sweep: int, label: str,
                        start: InformationRates) -> RestartRecord:
    return _run_restart(_worker_objective, config, sweep, label, start)


def _best(records: Sequence[RestartRecord]) -> RestartRecord:
    return min(records, key=lambda r: (r.value, r.rates))


def optimize_rates(spec: DesignSpec, config: OptimConfig = OptimConfig()) -> OptimResult:
    """Interim timings minimizing ESS under H1 for ``spec`` (its rates are ignored)."""
    spec = spec.with_rates(None)
    scale = ess_scale(spec)
    if spec.stages == 1:
        value = objective(spec, InformationRates((1.0,)))
        return OptimResult(InformationRates((1.0,)), value, value * scale, 0, 0, True)

    records: List[RestartRecord] = []
    best: Optional[RestartRecord] = None
    starts = grid_schedules(spec.stages, config.restart_grid)
    shared = CachedObjective(spec, config.points)
    pool = None
    if config.workers > 1:
        pool = ProcessPoolExecutor(max_workers=config.workers, initializer=_init_worker,
                                   initargs=(spec, config.points))
    try:
        for sweep in range(1, config.max_sweeps + 1):
            jobs = [(config, sweep, label, s) for label, s in starts]
            if pool is not None:
                sweep_records = list(pool.map(_run_pooled_restart, *zip(*jobs)))
            else:
                sweep_records = [_run_restart(shared, *job) for job in jobs]
            records.extend(sweep_records)
            candidate = _best(sweep_records if best is None else sweep_records + [best])
            improvement = math.inf if best is None else best.value - candidate.value
            logger.info("sweep %d (K=%d): best %.10g at %s", sweep, spec.stages,
                        candidate.value, np.round(candidate.rates[:-1], 4))
            best = candidate
            if not np.isfinite(best.value):
                raise InfeasibleDesignError(f"no feasible schedule found for K={spec.stages}")
            if improvement < config.improvement_epsilon * abs(best.value):
                break
            starts = perturbed_schedules(InformationRates(best.rates))
    finally:
        if pool is not None:
            pool.shutdown()
    if pool is None:
        logger.debug("K=%d: %d distinct schedules evaluated", spec.stages, shared.evaluations)

    return OptimResult(
        rates=InformationRates(best.rates),
        objective=best.value,
        ess_h1=best.value * scale,
        evaluations=sum(r.evaluations for r in records),
        restarts_used=len(records),
        converged=any(r.converged for r in records),
        per_restart_log=tuple(records),
    )


def optimize_stage_sweep(
    spec: DesignSpec,
    max_stages: int,
    config: OptimConfig = OptimConfig(),
    solve: Callable[[DesignSpec, OptimConfig], OptimResult] = optimize_rates,
) -> List[OptimResult]:
    """Optimal schedules for K = 1..max_stages (ESS gain of each extra interim).

    ``solve`` runs one stage count; the CLI passes a cached variant.
    """
    if max_stages < 1:
        raise DesignValidationError("max_stages must be >= 1", "stages")
    return [solve(replace(spec, stages=k, rates=None), config)
            for k in range(1, max_stages + 1)]
