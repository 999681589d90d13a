"""
CLI entry point for the Friedrichs weak coupling limit laboratory.

Exit codes: 0 success, 1 numerical or assumption failure, 2 usage or config error.
"""

import json
import time
from datetime import datetime
from pathlib import Path
from typing import Optional

import typer
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .catalog import get_catalog, load_model
from .config import Config, SweepConfig, get_config
from .davies import ROUTES, closed_form, run_routes
from .dilation import run_diagnostics
from .errors import FriedrichsError, ModelFileError
from .json_utils import content_hash, decode_complex_matrix
from .logging_utils import save_report, setup_logging
from .model import check_assumptions
from .orchestration import run_sweep
from .schemas import FailedPoint, RunManifest

CONFIG_ERRORS = (ModelFileError, ValidationError, FileNotFoundError, yaml.YAMLError, json.JSONDecodeError)

cli = typer.Typer(
    name="fwcl",
    help="Friedrichs weak coupling limit - Davies generators, dilations and convergence sweeps",
    add_completion=False,
)

console = Console()


# ============================================================================
# Helpers
# ============================================================================

def _load_config(config: Optional[str]) -> Config:
    cfg = Config.from_yaml(config) if config else get_config()
    setup_logging(cfg.logging.level)
    return cfg


def _config_error(e: Exception):
    console.print(f"[bold red]Config error:[/bold red] {e}")
    raise typer.Exit(code=2)


def _numerical_error(e: Exception):
    console.print(f"[bold red]Error:[/bold red] {type(e).__name__}: {e}")
    raise typer.Exit(code=1)


def _write_manifest(
    command: str,
    inputs: dict,
    outputs: list[str],
    started: datetime,
    t0: float,
    out_dir: Path,
    failed: Optional[list[FailedPoint]] = None,
    notes: Optional[list[str]] = None,
) -> str:
    manifest = RunManifest(
        command=command,
        config_hash=content_hash(inputs),
        tool_version=__version__,
        started=started.isoformat(),
        finished=datetime.now().isoformat(),
        wall_seconds=time.time() - t0,
        outputs=outputs,
        failed=failed or [],
        notes=notes or [],
    )
    return save_report(manifest, f"{command}_manifest", output_dir=out_dir)[0]


def _fmt(z: complex) -> str:
    return f"{z.real:+.6g}{z.imag:+.6g}i"


# ============================================================================
# Commands
# ============================================================================

@cli.command()
def validate(
    model: str = typer.Option("builtin:lorentzian", "--model", "-m", help="Model file or builtin:name"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Config YAML file"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Check assumptions A1-A3 on a model."""
    started, t0 = datetime.now(), time.time()
    try:
        cfg = _load_config(config)
        m = load_model(model)
        report = check_assumptions(m, cfg.validation.samples, cfg.validation.tol, cfg.validation.holder_ratio)
    except CONFIG_ERRORS as e:
        _config_error(e)
    except FriedrichsError as e:
        _numerical_error(e)

    table = Table(title=f"Assumptions: {m.name}")
    table.add_column("Assumption", style="cyan")
    table.add_column("Subject")
    table.add_column("Result")
    table.add_column("Detail", style="dim")
    for check in report.checks:
        result = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.assumption, check.subject, result, check.detail)
    console.print(table)

    out_dir = Path(out or cfg.logging.output_dir)
    outputs = save_report(report, "validation", output_dir=out_dir)
    inputs = {"command": "validate", "model": model, "config": cfg.model_dump(mode="json")}
    manifest = _write_manifest("validate", inputs, outputs, started, t0, out_dir)
    console.print(f"\n[dim]Report: {outputs[0]}  Manifest: {manifest}[/dim]\n")

    if not report.passed:
        raise typer.Exit(code=1)


@cli.command()
def davies(
    model: str = typer.Option("builtin:lorentzian", "--model", "-m", help="Model file or builtin:name"),
    route: str = typer.Option("all", "--route", "-r", help="closed | stationary | dynamic | all"),
    tol: Optional[float] = typer.Option(None, "--tol", help="PV quadrature tolerance"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Config YAML file"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Compute the Davies generator by the requested routes."""
    started, t0 = datetime.now(), time.time()
    routes = list(ROUTES) if route == "all" else [route]
    if any(r not in ROUTES for r in routes):
        _config_error(ValueError(f"--route must be one of {list(ROUTES) + ['all']}"))
    try:
        cfg = _load_config(config)
        if tol is not None:
            cfg.davies.pv_tol = tol
        m = load_model(model)
        report, generators = run_routes(m, routes, cfg.davies, cfg.grid)
    except CONFIG_ERRORS as e:
        _config_error(e)
    except FriedrichsError as e:
        _numerical_error(e)

    table = Table(title=f"Davies generator: {m.name}")
    table.add_column("Route", style="cyan")
    table.add_column("Gamma (diagonal)")
    table.add_column("Dissipativity")
    table.add_column("||Im Gamma + pi nu*nu||")
    for result in report.routes:
        diag = decode_complex_matrix(result.total).diagonal()
        table.add_row(result.route, ", ".join(_fmt(z) for z in diag),
                      f"{result.dissipativity:.3e}", f"{result.condition_residual:.3e}")
    console.print(table)
    for name, diff in report.cross_differences.items():
        console.print(f"  {name}: {diff:.3e}")
    for name, reason in report.failures.items():
        console.print(f"[bold yellow]Route {name} failed:[/bold yellow] {reason}")

    out_dir = Path(out or cfg.logging.output_dir)
    outputs = save_report(report, "davies", output_dir=out_dir)
    inputs = {"command": "davies", "model": model, "routes": routes, "config": cfg.model_dump(mode="json")}
    _write_manifest("davies", inputs, outputs, started, t0, out_dir,
                    notes=[f"{k}: {v}" for k, v in report.failures.items()])

    if not generators:
        raise typer.Exit(code=1)


@cli.command()
def dilation(
    model: str = typer.Option("builtin:lorentzian", "--model", "-m", help="Model file or builtin:name"),
    tol: Optional[float] = typer.Option(None, "--tol", help="Identity tolerance"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Config YAML file"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Run the dilation diagnostics (cutoff table, identities, minimality, scaling)."""
    started, t0 = datetime.now(), time.time()
    try:
        cfg = _load_config(config)
        if tol is not None:
            cfg.dilation.identity_tol = tol
        m = load_model(model)
        gen = closed_form(m, tol=cfg.davies.pv_tol, max_depth=cfg.davies.pv_max_depth)
        report = run_diagnostics(gen, cfg.dilation, cfg.grid, model_name=m.name, linalg=cfg.linalg)
    except CONFIG_ERRORS as e:
        _config_error(e)
    except FriedrichsError as e:
        _numerical_error(e)

    table = Table(title="||(i - Z_k)^-1 - Q(i)||")
    table.add_column("k", style="cyan")
    table.add_column("Error")
    table.add_column("Ratio")
    for row in report.cutoff_table:
        table.add_row(f"{row.k:g}", f"{row.error:.4e}", "" if row.ratio is None else f"{row.ratio:.3f}")
    console.print(table)

    checks = Table(title="Identities")
    checks.add_column("Check", style="cyan")
    checks.add_column("Residual")
    checks.add_column("Tolerance")
    checks.add_column("Result")
    for c in report.identities:
        checks.add_row(c.name, f"{c.residual:.3e}", f"{c.tolerance:.1e}",
                       "[green]pass[/green]" if c.passed else "[red]FAIL[/red]")
    console.print(checks)

    mini = report.minimality
    console.print(Panel(
        f"[bold]Minimal:[/bold] {mini.minimal}\n"
        f"[bold]rank nu:[/bold] {mini.rank} of dim h = {mini.fiber_dim}",
        title="Minimality",
        border_style="green" if mini.minimal else "yellow",
    ))

    out_dir = Path(out or cfg.logging.output_dir)
    outputs = save_report(report, "dilation", output_dir=out_dir)
    inputs = {"command": "dilation", "model": model, "config": cfg.model_dump(mode="json")}
    _write_manifest("dilation", inputs, outputs, started, t0, out_dir, notes=report.failures)

    if not report.passed:
        for failure in report.failures:
            console.print(f"[bold red]Failed:[/bold red] {failure}")
        raise typer.Exit(code=1)


@cli.command()
def sweep(
    sweep_config: str = typer.Argument(..., help="Sweep config (YAML or JSON): experiment, model, lambdas, probes"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Config YAML file with the global settings"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory (overrides the sweep config)"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", help="Worker threads (default: logical cores)"),
):
    """
    Run a lambda sweep of one limit experiment.

    SWEEP_CONFIG describes the sweep itself; --config is the global settings
    file (tolerances, linear algebra, jobs, seed) shared by every command.
    """
    started, t0 = datetime.now(), time.time()
    try:
        cfg = _load_config(config)
        sweep_cfg = SweepConfig.from_file(sweep_config)
        console.print(f"\n[bold cyan]Sweep {sweep_cfg.experiment} over {len(sweep_cfg.lambdas)} lambda(s)...[/bold cyan]\n")
        report = run_sweep(sweep_cfg, cfg, jobs=jobs)
    except CONFIG_ERRORS as e:
        _config_error(e)
    except FriedrichsError as e:
        _numerical_error(e)

    table = Table(title=f"{report.experiment} on {report.model}")
    table.add_column("Probe", style="cyan")
    table.add_column("Errors (lambda descending)")
    table.add_column("Order")
    table.add_column("Residual")
    for fit in report.fits:
        errors = ", ".join(f"{x:.3e}" for x in report.errors_for(fit.probe_id))
        order = "undefined" if fit.fitted_order is None else f"{fit.fitted_order:.3f}"
        residual = "" if fit.residual is None else f"{fit.residual:.3f}"
        table.add_row(fit.probe_id, errors, order, residual)
    console.print(table)

    out_dir = Path(out or sweep_cfg.output)
    outputs = save_report(report, sweep_cfg.experiment, output_dir=out_dir)
    inputs = {"command": "sweep", "sweep": sweep_cfg.model_dump(mode="json"), "config": cfg.model_dump(mode="json")}
    manifest = _write_manifest("sweep", inputs, outputs, started, t0, out_dir,
                               failed=report.failures, notes=report.metadata.get("notes", []))
    console.print(f"\n[dim]CSV: {outputs[1]}  Manifest: {manifest}[/dim]\n")

    if report.failures:
        console.print(f"[bold yellow]{len(report.failures)} point(s) failed; see the manifest[/bold yellow]")
    if not report.records:
        raise typer.Exit(code=1)


@cli.command()
def models():
    """List the built-in models."""
    table = Table(title="Built-in models")
    table.add_column("Reference", style="cyan")
    table.add_column("dim E")
    table.add_column("Coupling")
    table.add_column("Window")
    for spec in get_catalog():
        family = spec.coupling.family or "table"
        table.add_row(f"builtin:{spec.name}", str(len(spec.small.E)), family,
                      f"[{spec.window[0]:g}, {spec.window[1]:g}]")
    console.print(table)


@cli.command()
def version():
    """Show version information."""
    console.print(f"friedrichs-wcl v{__version__}")


def cli_app():
    """Entry point for CLI."""
    cli()


if __name__ == "__main__":
    cli_app()
