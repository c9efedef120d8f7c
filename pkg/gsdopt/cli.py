import functools
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Set

import typer
from tqdm import tqdm

from gsdopt.boundaries import BoundaryRule, Family, FutilityMode, FutilityRule, Sidedness
from gsdopt.config import default_db_path, default_out_dir, load_document, load_preset
from gsdopt.design import (
    ContinuousEndpoint,
    DesignSpec,
    EndpointSpec,
    Hypothesis,
    OperatingCharacteristics,
    characterize,
    fixed_sample_size,
)
from gsdopt.errors import DesignValidationError, GsdError
from gsdopt.gauss import StageDistribution
from gsdopt.model import InformationRates
from gsdopt.optimizer import (
    RESTART_GRID,
    OptimConfig,
    OptimResult,
    optimize_rates,
    optimize_stage_sweep,
)
from gsdopt.oracle import SimConfig, mc_exit_probabilities
from gsdopt.report import (
    INFLATION_COLUMNS,
    SURFACE_COLUMNS,
    SWEEP_COLUMNS,
    format_case_study,
    format_design,
    format_rate_table,
    inflation_rows,
    report_dict,
    surface_row,
    sweep_rows,
    write_csv,
    write_design_csv,
    write_json,
)
from gsdopt.store import ResultStore

logger = logging.getLogger("gsdopt.cli")

app = typer.Typer(help="Group-sequential design engine with optimal interim timing")

FORMATS = {"csv", "json", "table"}
TABLE_FAMILIES = ("haybittle-peto", "pocock", "obf")
CLASSICAL_FAMILIES = ("pocock-classical", "obf-classical")


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, len(RESTART_GRID)))


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="[%(levelname)s] %(name)s: %(message)s")


def _exit_codes(fn: Callable) -> Callable:
    """Map validation failures to exit 2 and solver failures to exit 3."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DesignValidationError as e:
            typer.echo(f"[ERROR] {e}", err=True)
            raise typer.Exit(2)
        except GsdError as e:
            typer.echo(f"[ERROR] {type(e).__name__}: {e}", err=True)
            raise typer.Exit(3)

    return wrapper


def _formats(value: str) -> Set[str]:
    fmts = {f.strip() for f in value.split(",") if f.strip()}
    if not fmts or fmts - FORMATS:
        raise DesignValidationError(f"expected a subset of {sorted(FORMATS)}, got {value!r}",
                                    "format")
    return fmts


def _futility_mode(value: str) -> FutilityMode:
    value = {"nonbinding": "non-binding"}.get(value, value)
    try:
        return FutilityMode(value)
    except ValueError:
        raise DesignValidationError(f"unknown futility mode {value!r}", "futility") from None


def _emit(oc: OperatingCharacteristics, out: Path, stem: str, fmts: Set[str], *,
          name: Optional[str] = None, ceil: bool = False) -> None:
    if "csv" in fmts:
        typer.echo(f"[OK] {write_design_csv(oc, out / f'{stem}.csv', ceil=ceil)}")
    if "json" in fmts:
        doc = report_dict(oc, name=name, ceil=ceil)
        typer.echo(f"[OK] {write_json(out / f'{stem}.json', doc)}")
    if "table" in fmts:
        typer.echo(format_design(oc, ceil=ceil))


def _optimize(spec: DesignSpec, cfg: OptimConfig, store: Optional[ResultStore]) -> OptimResult:
    if store is not None:
        hit = store.lookup(spec, cfg)
        if hit is not None:
            return hit
    res = optimize_rates(spec, cfg)
    if not res.converged:
        logger.warning("optimizer budget exhausted for K=%d", spec.stages)
    if store is not None:
        store.save(spec, cfg, res)
    return res


@app.command()
@_exit_codes
def design(
    input: Path = typer.Option(..., "--input", "-i", help="YAML/JSON design document"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory (GSDOPT_OUT_DIR)"),
    format: str = typer.Option("csv,json,table", "--format"),
    ceil: bool = typer.Option(False, "--ceil", help="Round sample sizes up on output"),
):
    """Characterize a fully specified design."""
    fmts = _formats(format)
    doc = load_document(input)
    oc = characterize(doc.to_spec())
    _emit(oc, out or Path(default_out_dir()), doc.name or "design", fmts, name=doc.name, ceil=ceil)


@app.command()
@_exit_codes
def optimize(
    input: Path = typer.Option(..., "--input", "-i"),
    out: Optional[Path] = typer.Option(None, "--out"),
    format: str = typer.Option("csv,json,table", "--format"),
    stages_up_to: Optional[int] = typer.Option(None, "--stages-up-to",
                                               help="Optimize K = 1..N and report ESS gains"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    cache: bool = typer.Option(True, "--cache/--no-cache"),
    ceil: bool = typer.Option(False, "--ceil"),
):
    """Find the interim timings that minimize ESS under H1, then characterize."""
    fmts = _formats(format)
    doc = load_document(input)
    spec = doc.to_spec()
    cfg = doc.optim_config()
    if workers is not None:
        cfg = replace(cfg, workers=workers)
    out = out or Path(default_out_dir())
    store = ResultStore(default_db_path(str(out))) if cache else None
    stem = f"{doc.name or 'design'}_optimal"

    if stages_up_to is not None:
        with tqdm(total=stages_up_to, desc="stages", disable=None) as bar:
            def solve(spec_k: DesignSpec, cfg_k: OptimConfig) -> OptimResult:
                res = _optimize(spec_k, cfg_k, store)
                bar.update()
                return res

            sweep = optimize_stage_sweep(spec, stages_up_to, cfg, solve=solve)
        n_fixed = fixed_sample_size(spec.endpoint, spec.z_alpha, spec.z_beta)
        rows = sweep_rows([(res, n_fixed) for res in sweep])
        typer.echo(f"[OK] {write_csv(out / f'{stem}_sweep.csv', SWEEP_COLUMNS, rows)}")
        for row in rows:
            typer.echo(f"K={row['stages']}: ESS(H1)={row['ess_h1']:.1f}  rates {row['rates']}")
        return

    res = _optimize(spec, cfg, store)
    typer.echo(f"optimal rates: {', '.join(f'{t:.4f}' for t in res.rates.interims)}  "
               f"ESS(H1)={res.ess_h1:.1f}  evaluations={res.evaluations}  "
               f"restarts={res.restarts_used}")
    oc = characterize(spec.with_rates(res.rates))
    _emit(oc, out, stem, fmts, name=doc.name, ceil=ceil)


def _table_spec(family: str, beta: float, stages: int, futility: FutilityMode) -> DesignSpec:
    rule = BoundaryRule(Family(family), Sidedness.ONE_SIDED)
    return DesignSpec(stages, 0.025, beta, rule, FutilityRule.for_efficacy(futility, rule),
                      EndpointSpec(ContinuousEndpoint(0.5, 1.0)))


@app.command()
@_exit_codes
def tables(
    family: str = typer.Option(",".join(TABLE_FAMILIES), "--family"),
    beta: str = typer.Option("0.1,0.2", "--beta"),
    max_stages: int = typer.Option(9, "--max-stages"),
    futility: str = typer.Option("none", "--futility"),
    out: Optional[Path] = typer.Option(None, "--out"),
    workers: Optional[int] = typer.Option(
        None, "--workers", help="Restart processes (default: one per start, capped at CPU count)"),
    cache: bool = typer.Option(True, "--cache/--no-cache"),
):
    """Optimal timing tables (percent of information) and inflation factors."""
    families = [f.strip() for f in family.split(",") if f.strip()]
    for f in families:
        if f not in TABLE_FAMILIES + CLASSICAL_FAMILIES:
            raise DesignValidationError(
                f"expected one of {TABLE_FAMILIES + CLASSICAL_FAMILIES}, got {f!r}", "family")
    try:
        betas = [float(b) for b in beta.split(",") if b.strip()]
    except ValueError:
        raise DesignValidationError(f"cannot parse {beta!r}", "beta") from None
    if not 2 <= max_stages <= 9:
        raise DesignValidationError("must lie in 2..9", "max-stages")
    mode = _futility_mode(futility)
    out = out or Path(default_out_dir())
    store = ResultStore(default_db_path(str(out))) if cache else None
    cfg = OptimConfig(workers=workers or default_workers())

    cells = [(f, b, k) for f in families for b in betas for k in range(2, max_stages + 1)]
    results: Dict[tuple, Dict[int, OptimResult]] = {}
    errors: Dict[tuple, Dict[int, str]] = {}
    inflation: List[dict] = []
    for f, b, k in tqdm(cells, desc="cells", disable=None):
        spec = _table_spec(f, b, k, mode)
        try:
            res = _optimize(spec, cfg, store)
            results.setdefault((f, b), {})[k] = res
            inflation += inflation_rows(f, b, "optimal", characterize(spec.with_rates(res.rates)))
            equal = spec.with_rates(InformationRates.equal(k))
            inflation += inflation_rows(f, b, "equal", characterize(equal))
        except GsdError as e:
            logger.warning("cell %s beta=%g K=%d failed: %s", f, b, k, e)
            errors.setdefault((f, b), {})[k] = f"{type(e).__name__}: {e}"

    text = []
    for f in families:
        for b in betas:
            title = f"{f}, beta={b:g}, futility={mode.value}"
            text.append(format_rate_table(title, results.get((f, b), {}), errors.get((f, b))))
    body = "\n\n".join(text)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rates.txt").write_text(body + "\n", encoding="utf-8")
    typer.echo(body)
    typer.echo(f"[OK] {out / 'rates.txt'}")
    typer.echo(f"[OK] {write_csv(out / 'inflation.csv', INFLATION_COLUMNS, inflation)}")


def _surface_points(n: int) -> List[tuple]:
    grid = [(i + 1) / (n + 1) for i in range(n)]
    return [(a, b) for a in grid for b in grid if a < b]


@app.command("case-study")
@_exit_codes
def case_study(
    name: str = typer.Argument(..., help="hypress or adrenal"),
    variant: str = typer.Option("original", "--variant", help="original or optimal"),
    out: Optional[Path] = typer.Option(None, "--out"),
    format: str = typer.Option("csv,json,table", "--format"),
    grid: Optional[int] = typer.Option(None, "--grid", help="Timing surface over an NxN grid"),
    workers: Optional[int] = typer.Option(
        None, "--workers", help="Restart processes (default: one per start, capped at CPU count)"),
    ceil: bool = typer.Option(False, "--ceil"),
):
    """Reproduce a bundled case study with its original or optimal schedule."""
    if variant not in ("original", "optimal"):
        raise DesignValidationError(f"expected original or optimal, got {variant!r}", "variant")
    fmts = _formats(format)
    doc = load_preset(name)
    spec = doc.to_spec()
    out = out or Path(default_out_dir())
    if variant == "optimal":
        res = optimize_rates(spec, OptimConfig(workers=workers or default_workers()))
        spec = spec.with_rates(res.rates)
    oc = characterize(spec)
    typer.echo(format_case_study(name, variant, oc))
    _emit(oc, out, f"{name}_{variant}", fmts - {"table"}, name=name, ceil=ceil)

    if grid is not None:
        if spec.stages != 3 or grid < 2:
            raise DesignValidationError("surface needs a three-stage design and N >= 2", "grid")
        rows = []
        for t1, t2 in tqdm(_surface_points(grid), desc="surface", disable=None):
            try:
                rows.append(surface_row(t1, t2, characterize(
                    spec.with_rates(InformationRates((t1, t2, 1.0))))))
            except GsdError as e:
                logger.debug("surface point (%.3f, %.3f) skipped: %s", t1, t2, e)
        typer.echo(f"[OK] {write_csv(out / f'{name}_surface.csv', SURFACE_COLUMNS, rows)}")


@app.command()
@_exit_codes
def verify(
    input: Path = typer.Option(..., "--input", "-i"),
    paths: Optional[int] = typer.Option(None, "--paths"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out"),
):
    """Check analytic exit probabilities and ESS against Monte Carlo."""
    doc = load_document(input)
    sim = doc.sim_config()
    sim = SimConfig(paths=paths or sim.paths, seed=sim.seed if seed is None else seed,
                    rng_kind=sim.rng_kind)
    oc = characterize(doc.to_spec())
    rows = []
    misses = 0
    for h in Hypothesis:
        dist = StageDistribution(oc.rates, oc.drift * oc.spec.endpoint.effect_ratio(h))
        mc = mc_exit_probabilities(dist, oc.boundaries, sim)
        analytic = oc.exit_probs[h]
        for k in range(oc.rates.stages):
            for kind in ("efficacy", "futility"):
                a = float(getattr(analytic, kind)[k])
                m = float(getattr(mc, kind)[k])
                se = float(mc.se(a))
                ok = abs(a - m) <= 3 * se + 1e-12
                misses += not ok
                rows.append({"hypothesis": h.value, "stage": k + 1, "kind": kind,
                             "analytic": a, "monte_carlo": m, "se": se, "within_3se": ok})
        ess, ess_se = mc.expected_sample_size(oc.n_per_stage)
        ok = abs(ess - oc.ess[h]) <= 3 * ess_se + 1e-9
        misses += not ok
        rows.append({"hypothesis": h.value, "stage": "", "kind": "ess", "analytic": oc.ess[h],
                     "monte_carlo": ess, "se": ess_se, "within_3se": ok})
        typer.echo(f"{h.value:>4}: rejection analytic {analytic.rejection():.4f}  "
                   f"MC {mc.rejection():.4f} +- {mc.rejection_se():.4f}")
        typer.echo(f"{h.value:>4}: ESS analytic {oc.ess[h]:.2f}  MC {ess:.2f} +- {ess_se:.2f}")
    out = out or Path(default_out_dir())
    columns = ["hypothesis", "stage", "kind", "analytic", "monte_carlo", "se", "within_3se"]
    path = write_csv(out / f"{doc.name or 'design'}_verify.csv", columns, rows)
    typer.echo(f"[OK] {path}")
    typer.echo(f"{len(rows) - misses}/{len(rows)} checks within 3 standard errors "
               f"({sim.paths} paths, seed {sim.seed})")


if __name__ == "__main__":
    app()
