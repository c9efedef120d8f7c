"""YAML design documents, validated with pydantic and turned into a DesignSpec.

A document looks like::

    stages: 3
    alpha: 0.05
    beta: 0.2
    sidedness: two-sided
    boundary: {family: obf}
    futility: {mode: none}
    endpoint: {type: binary, p_control: 0.40, p_treatment: 0.25}
    rates: [0.333333333333, 0.666666666667, 1.0]

JSON reports written by ``gsdopt.report`` carry the same mapping under a
top-level ``spec`` key and are accepted as input too.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from gsdopt.boundaries import BoundaryRule, Family, FutilityMode, FutilityRule, Sidedness
from gsdopt.design import BinaryEndpoint, ContinuousEndpoint, DesignSpec, EndpointSpec
from gsdopt.errors import DesignValidationError
from gsdopt.model import InformationRates
from gsdopt.optimizer import RESTART_GRID, OptimConfig
from gsdopt.oracle import DEFAULT_PATHS, SimConfig

PRESET_DIR = Path(__file__).parent / "presets"


def default_out_dir() -> str:
    return os.environ.get("GSDOPT_OUT_DIR", "gsdopt_out")


def default_db_path(out_dir: Optional[str] = None) -> str:
    return os.environ.get("GSDOPT_DB", str(Path(out_dir or default_out_dir()) / "gsdopt.db"))


# ---------- Pydantic models ----------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoundaryModel(_Strict):
    family: Family
    rho: Optional[float] = None
    gamma: Optional[float] = None
    table: Optional[List[Tuple[float, float]]] = None


class FutilityModel(_Strict):
    mode: FutilityMode = FutilityMode.NONE
    family: Optional[Family] = None
    rho: Optional[float] = None
    gamma: Optional[float] = None
    table: Optional[List[Tuple[float, float]]] = None


class ContinuousModel(_Strict):
    type: Literal["continuous"]
    delta: float
    sigma: float = 1.0
    allocation_ratio: float = 1.0


class BinaryModel(_Strict):
    type: Literal["binary"]
    p_control: float
    p_treatment: float
    allocation_ratio: float = 1.0


class OptimizerModel(_Strict):
    simplex_tolerance: float = 1e-8
    max_evals: Optional[int] = None
    restart_grid: List[str] = Field(default_factory=lambda: list(RESTART_GRID))
    improvement_epsilon: float = 1e-7
    max_sweeps: int = 10
    workers: int = 1


class SimulationModel(_Strict):
    paths: int = DEFAULT_PATHS
    seed: int = 20240101
    rng_kind: str = "philox"


class DesignModel(_Strict):
    name: Optional[str] = None
    stages: int
    alpha: float
    beta: float
    sidedness: Sidedness = Sidedness.ONE_SIDED
    boundary: BoundaryModel
    futility: FutilityModel = Field(default_factory=FutilityModel)
    endpoint: Union[BinaryModel, ContinuousModel] = Field(discriminator="type")
    rates: Optional[List[float]] = None
    optimizer: OptimizerModel = Field(default_factory=OptimizerModel)
    simulation: SimulationModel = Field(default_factory=SimulationModel)

    def boundary_rule(self) -> BoundaryRule:
        b = self.boundary
        return BoundaryRule(b.family, self.sidedness, b.rho, b.gamma,
                            tuple(map(tuple, b.table)) if b.table else None)

    def futility_rule(self) -> FutilityRule:
        f = self.futility
        return FutilityRule.for_efficacy(f.mode, self.boundary_rule(), family=f.family,
                                         rho=f.rho, gamma=f.gamma, table=f.table)

    def endpoint_spec(self) -> EndpointSpec:
        e = self.endpoint
        if isinstance(e, BinaryModel):
            return EndpointSpec(BinaryEndpoint(e.p_control, e.p_treatment), e.allocation_ratio)
        return EndpointSpec(ContinuousEndpoint(e.delta, e.sigma), e.allocation_ratio)

    def to_spec(self) -> DesignSpec:
        rates = InformationRates(tuple(self.rates)) if self.rates is not None else None
        return DesignSpec(
            stages=self.stages,
            alpha=self.alpha,
            beta=self.beta,
            boundary_rule=self.boundary_rule(),
            futility=self.futility_rule(),
            endpoint=self.endpoint_spec(),
            rates=rates,
        )

    def optim_config(self) -> OptimConfig:
        o = self.optimizer
        return OptimConfig(simplex_tolerance=o.simplex_tolerance, max_evals=o.max_evals,
                           restart_grid=tuple(o.restart_grid),
                           improvement_epsilon=o.improvement_epsilon,
                           max_sweeps=o.max_sweeps, workers=o.workers)

    def sim_config(self) -> SimConfig:
        s = self.simulation
        return SimConfig(paths=s.paths, seed=s.seed, rng_kind=s.rng_kind)


# ---------- Loading ----------


def _field(loc) -> str:
    return ".".join(str(p) for p in loc) or "document"


def parse_document(data: Any) -> DesignModel:
    """Validate a decoded mapping; a report's top-level ``spec`` is unwrapped."""
    if isinstance(data, dict) and isinstance(data.get("spec"), dict):
        data = data["spec"]
    if not isinstance(data, dict):
        raise DesignValidationError("configuration must be a mapping", "document")
    try:
        return DesignModel.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        raise DesignValidationError(err["msg"], _field(err["loc"])) from e


def load_document(path: Union[str, Path]) -> DesignModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DesignValidationError(f"cannot read {path}: {e.strerror}", "input") from e
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else f"line {getattr(e, 'lineno', '?')}"
        raise DesignValidationError(f"cannot parse {path.name} ({where})", "document") from e
    return parse_document(data)


def load_spec(path: Union[str, Path]) -> DesignSpec:
    return load_document(path).to_spec()


def preset_names() -> List[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def load_preset(name: str) -> DesignModel:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        raise DesignValidationError(f"unknown case study {name!r} (have {preset_names()})", "name")
    return load_document(path)


def spec_to_dict(spec: DesignSpec, name: Optional[str] = None) -> Dict[str, Any]:
    """Inverse of ``DesignModel.to_spec`` for embedding in reports."""
    rule = spec.boundary_rule
    boundary: Dict[str, Any] = {"family": rule.family.value}
    if rule.rho is not None:
        boundary["rho"] = rule.rho
    if rule.gamma is not None:
        boundary["gamma"] = rule.gamma
    if rule.table is not None:
        boundary["table"] = [list(p) for p in rule.table]
    futility: Dict[str, Any] = {"mode": spec.futility.mode.value}
    if spec.futility.active:
        f = spec.futility.spending
        futility["family"] = f.family.value
        for key in ("rho", "gamma"):
            if getattr(f, key) is not None:
                futility[key] = getattr(f, key)
        if f.table is not None:
            futility["table"] = [list(p) for p in f.table]
    kind = spec.endpoint.kind
    if isinstance(kind, BinaryEndpoint):
        endpoint = {"type": "binary", "p_control": kind.p_control,
                    "p_treatment": kind.p_treatment}
    else:
        endpoint = {"type": "continuous", "delta": kind.delta, "sigma": kind.sigma}
    endpoint["allocation_ratio"] = spec.endpoint.allocation_ratio
    doc: Dict[str, Any] = {
        "stages": spec.stages,
        "alpha": spec.alpha,
        "beta": spec.beta,
        "sidedness": spec.sidedness.value,
        "boundary": boundary,
        "futility": futility,
        "endpoint": endpoint,
        "rates": list(spec.rates.values) if spec.rates is not None else None,
    }
    if name:
        doc = {"name": name, **doc}
    return doc
