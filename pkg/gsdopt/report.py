"""Report emission: stagewise CSV, nested JSON and plain-text tables.

All rounding happens here. Values handed in are never modified.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from gsdopt.config import spec_to_dict
from gsdopt.design import Hypothesis, OperatingCharacteristics
from gsdopt.gauss import normal_cdf
from gsdopt.optimizer import OptimResult

SCHEMA_VERSION = 1

DESIGN_COLUMNS = [
    "stage", "rate", "n", "upper", "lower", "nominal_p",
    "efficacy_h0", "efficacy_mid", "efficacy_h1",
    "futility_h0", "futility_mid", "futility_h1",
]
INFLATION_COLUMNS = ["family", "beta", "stages", "schedule", "metric", "value"]
SWEEP_COLUMNS = ["stages", "rates", "ess_h1", "eif_h1", "saving_vs_previous"]
SURFACE_COLUMNS = ["t1", "t2", "mss", "ess_h0", "ess_mid", "ess_h1"]

_HYP_LABEL = {Hypothesis.H0: "H0", Hypothesis.MID: "H0/H1", Hypothesis.H1: "H1"}

PathLike = Union[str, Path]


def _size(n: float, ceil: bool) -> float:
    return float(math.ceil(n - 1e-9)) if ceil else n


def pct(t: float) -> str:
    return f"{100.0 * t:.1f}"


# -----------------------------
# Design reports
# -----------------------------
def design_rows(oc: OperatingCharacteristics, *, ceil: bool = False) -> List[Dict[str, Any]]:
    b = oc.boundaries
    rows = []
    for k in range(oc.rates.stages):
        row: Dict[str, Any] = {
            "stage": k + 1,
            "rate": oc.rates[k],
            "n": _size(oc.n_per_stage[k], ceil),
            "upper": b.upper[k],
            "lower": b.lower[k] if b.has_futility else None,
            "nominal_p": 1.0 - normal_cdf(b.upper[k]),
        }
        for h in Hypothesis:
            probs = oc.exit_probs[h]
            row[f"efficacy_{h.value}"] = float(probs.efficacy[k])
            row[f"futility_{h.value}"] = float(probs.futility[k]) if b.has_futility else None
        rows.append(row)
    return rows


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(columns))
        w.writeheader()
        for row in rows:
            w.writerow({c: "" if row.get(c) is None else row[c] for c in columns})
    return path


def write_design_csv(oc: OperatingCharacteristics, path: PathLike, *, ceil: bool = False) -> Path:
    return write_csv(path, DESIGN_COLUMNS, design_rows(oc, ceil=ceil))


def report_dict(oc: OperatingCharacteristics, *, name: Optional[str] = None,
                ceil: bool = False) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "spec": spec_to_dict(oc.spec.with_rates(oc.rates), name),
        "drift": oc.drift,
        "n_fixed": oc.n_fixed,
        "n_max": _size(oc.n_max, ceil),
        "n_per_stage": [_size(n, ceil) for n in oc.n_per_stage],
        "type1_error": oc.type1_error,
        "power": oc.power,
        "mif": oc.mif,
        "ess": {h.value: oc.ess[h] for h in Hypothesis},
        "eif": {h.value: oc.eif(h) for h in Hypothesis},
        "stages": design_rows(oc, ceil=ceil),
    }


def write_json(path: PathLike, doc: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def format_design(oc: OperatingCharacteristics, *, ceil: bool = False) -> str:
    spec = oc.spec
    rule = spec.boundary_rule
    lines = [
        f"K={oc.rates.stages}  {rule.family.value} ({spec.sidedness.value}, alpha={spec.alpha:g})  "
        f"beta={spec.beta:g}  futility={spec.futility.mode.value}",
        f"drift={oc.drift:.4f}  N0={oc.n_fixed:.1f}  MSS={_size(oc.n_max, ceil):.1f}  "
        f"MIF={oc.mif:.4f}  alpha(actual)={oc.type1_error:.5f}  power={oc.power:.4f}",
        "",
        f"{'stage':>5} {'rate':>6} {'n':>9} {'u_k':>8} {'l_k':>8} {'p_k':>9} "
        f"{'eff H0':>8} {'eff mid':>8} {'eff H1':>8}",
    ]
    for row in design_rows(oc, ceil=ceil):
        lower = f"{row['lower']:8.4f}" if row["lower"] is not None else f"{'-':>8}"
        lines.append(
            f"{row['stage']:>5} {row['rate']:6.3f} {row['n']:9.1f} {row['upper']:8.4f} {lower} "
            f"{row['nominal_p']:9.6f} {row['efficacy_h0']:8.4f} {row['efficacy_mid']:8.4f} "
            f"{row['efficacy_h1']:8.4f}")
    lines.append("")
    lines.append("ESS: " + "  ".join(f"{_HYP_LABEL[h]}={oc.ess[h]:.1f} (EIF {oc.eif(h):.4f})"
                                     for h in Hypothesis))
    return "\n".join(lines)


def format_case_study(name: str, variant: str, oc: OperatingCharacteristics) -> str:
    """Stagewise exit probabilities per hypothesis plus the MSS/ESS summary."""
    lines = [f"{name} ({variant}): rates " + ", ".join(f"{t:.3f}" for t in oc.rates), ""]
    header = f"{'':>8}" + "".join(f"{'stage ' + str(k + 1):>18}" for k in range(oc.rates.stages))
    lines.append(header)
    lines.append(f"{'N_k':>8}" + "".join(f"{n:>18.1f}" for n in oc.n_per_stage))
    for h in Hypothesis:
        probs = oc.exit_probs[h]
        lines.append(f"{_HYP_LABEL[h]:>8}" + "".join(f"{p:>18.4f}" for p in probs.efficacy))
    lines.append("")
    lines.append(f"MSS={oc.n_max:.1f}  " + "  ".join(
        f"ESS({_HYP_LABEL[h]})={oc.ess[h]:.1f}" for h in Hypothesis))
    return "\n".join(lines)


# -----------------------------
# Optimization tables
# -----------------------------
def format_rate_table(title: str, cells: Mapping[int, Optional[OptimResult]],
                      errors: Optional[Mapping[int, str]] = None) -> str:
    """Optimal rates in percent, one row per number of stages."""
    errors = errors or {}
    stages = sorted(set(cells) | set(errors))
    width = max((k for k in stages), default=2) - 1
    lines = [title, "K  " + "".join(f"{'t' + str(i + 1):>7}" for i in range(width))]
    for k in stages:
        res = cells.get(k)
        if res is None:
            lines.append(f"{k:<3}failed: {errors.get(k, 'unknown error')}")
            continue
        lines.append(f"{k:<3}" + "".join(f"{pct(t):>7}" for t in res.rates.interims))
    return "\n".join(lines)


def inflation_rows(family: str, beta: float, schedule: str,
                   oc: OperatingCharacteristics) -> List[Dict[str, Any]]:
    base = {"family": family, "beta": beta, "stages": oc.rates.stages, "schedule": schedule}
    rows = [{**base, "metric": "mif", "value": oc.mif}]
    rows += [{**base, "metric": f"eif_{h.value}", "value": oc.eif(h)} for h in Hypothesis]
    return rows


def sweep_rows(results: Sequence[Tuple[OptimResult, float]]) -> List[Dict[str, Any]]:
    """Rows for a stage-count sweep; each entry is (result, n_fixed)."""
    rows = []
    prev = None
    for res, n_fixed in results:
        rows.append({
            "stages": res.rates.stages,
            "rates": " ".join(f"{t:.4f}" for t in res.rates.interims),
            "ess_h1": res.ess_h1,
            "eif_h1": res.ess_h1 / n_fixed,
            "saving_vs_previous": None if prev is None else prev - res.ess_h1,
        })
        prev = res.ess_h1
    return rows


def surface_row(t1: float, t2: float, oc: OperatingCharacteristics) -> Dict[str, Any]:
    return {"t1": t1, "t2": t2, "mss": oc.n_max, "ess_h0": oc.ess_h0,
            "ess_mid": oc.ess_mid, "ess_h1": oc.ess_h1}
