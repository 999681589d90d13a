"""
Sweep orchestration: build the asymptotic system once, evaluate one limit
experiment for every lambda in parallel, and reduce the results into a
deterministic ConvergenceReport with fitted log-log orders.
"""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .catalog import load_model
from .config import Config, SweepConfig
from .davies import DaviesGenerator, closed_form
from .dilation import AsymptoticSystem, build_system, group_kwargs
from .errors import FriedrichsError
from .model import AsymptoticGrid, FriedrichsModel
from .schemas import ConvergenceReport, FailedPoint, FitResult, SweepRecord
from .wcl import (
    Probe,
    ScaledEvolution,
    default_t_samples,
    extended_dynamics_error,
    extended_offsector_norm,
    extended_resolvent_error,
    interaction_auxiliary_error,
    interaction_picture_error,
    laplace_averaged_error,
    prepare,
    probe_family,
    reduced_dynamics_error,
    reduced_offsector_norm,
    reduced_resolvent_error,
    weak_uniform_error,
)

logger = logging.getLogger(__name__)

PROBE_NOTE = "strong convergence is checked on a finite probe family, an under-approximation of all psi"

VECTOR_EXPERIMENTS = {"extended_dynamics", "interaction_picture", "interaction_auxiliary", "weak_uniform"}


@dataclass(frozen=True)
class SweepContext:
    """Everything shared by the lambda points of one sweep."""

    sweep: SweepConfig
    config: Config
    model: FriedrichsModel
    davies: DaviesGenerator
    sys: AsymptoticSystem
    probes: list[Probe]


def prepare_sweep(sweep: SweepConfig, config: Optional[Config] = None) -> SweepContext:
    """Load the model, compute Gamma by the closed form and build the asymptotic system."""
    if config is None:
        from .config import get_config
        config = get_config()

    sweep = sweep.model_copy(update={
        "t_points": sweep.t_points or config.wcl.t_points,
        "probe_seeds": config.wcl.probe_seeds if sweep.probe_seeds is None else sweep.probe_seeds,
    })
    model = load_model(sweep.model)
    davies = closed_form(model, tol=config.davies.pv_tol, max_depth=config.davies.pv_max_depth)
    sys = build_system(davies, AsymptoticGrid.from_policy(sweep.grid), condition_tol=config.dilation.condition_tol)
    probes = []
    if sweep.experiment in VECTOR_EXPERIMENTS:
        probes = probe_family(sys, kinds=sweep.probes, widths=config.wcl.probe_widths,
                              seeds=sweep.probe_seeds, e=sweep.eigenvalue, base_seed=config.seed)
    return SweepContext(sweep=sweep, config=config, model=model, davies=davies, sys=sys, probes=probes)


def _z_label(z: complex) -> str:
    return f"z={z.real:g}{z.imag:+g}i"


def _tasks(ctx: SweepContext) -> list[tuple[str, str, object]]:
    """(probe_id, probe_kind, payload) in report order."""
    sweep = ctx.sweep
    exp = sweep.experiment
    if exp in ("reduced_resolvent", "extended_resolvent", "reduced_offsector", "extended_offsector"):
        return [(_z_label(z), "z", z) for z in sweep.z_values]
    if exp == "reduced_dynamics":
        return [(f"T={sweep.T:g}", "t", sweep.T)]
    if exp == "laplace_averaged":
        return [(f"hat[0,{sweep.T:g}]", "f", sweep.T)]
    if exp == "weak_uniform":
        return [(p.probe_id, p.kind, p) for p in ctx.probes]
    return [(f"{p.probe_id}@t={t:g}", p.kind, (p, t)) for p in ctx.probes for t in sweep.t]


def _evaluate(ctx: SweepContext, ev: ScaledEvolution, payload) -> float:
    sweep = ctx.sweep
    group = group_kwargs(ctx.config.dilation, ctx.config.linalg)
    exp = sweep.experiment
    if exp == "reduced_resolvent":
        return reduced_resolvent_error(ev, payload, ctx.davies)
    if exp == "extended_resolvent":
        return extended_resolvent_error(ev, payload)
    if exp == "reduced_offsector":
        return reduced_offsector_norm(ev, payload)
    if exp == "extended_offsector":
        return extended_offsector_norm(ev, payload)
    if exp == "reduced_dynamics":
        return reduced_dynamics_error(ev, ctx.davies.total, payload, default_t_samples(payload, sweep.t_points))
    if exp == "laplace_averaged":
        t_grid = np.linspace(0.0, payload, sweep.t_points)
        f = 1.0 - np.abs(2.0 * t_grid / payload - 1.0)
        return laplace_averaged_error(ev, f, t_grid, k=sweep.k_max)
    if exp == "weak_uniform":
        return weak_uniform_error(ev, payload.vector, payload.vector, sweep.T, sweep.t_points, **group)
    probe, t = payload
    if exp == "extended_dynamics":
        return extended_dynamics_error(ev, t, probe.vector, **group)
    if exp == "interaction_picture":
        return interaction_picture_error(ev, t, probe.vector, **group)
    if exp == "interaction_auxiliary":
        return interaction_auxiliary_error(ev, t, probe.vector)
    raise ValueError(f"Unknown experiment: {exp}")


def run_lambda(ctx: SweepContext, lam: float) -> tuple[list[SweepRecord], list[FailedPoint]]:
    """All probes of one lambda; failures are collected, not raised."""
    sweep = ctx.sweep
    records, failures = [], []
    try:
        ev = prepare(ctx.model, lam, ctx.sys, policy=sweep.grid, e=sweep.eigenvalue, linalg=ctx.config.linalg)
    except FriedrichsError as e:
        logger.warning(f"lambda={lam:g}: setup failed: {e}")
        return [], [FailedPoint(lam=lam, reason=f"{type(e).__name__}: {e}")]

    for probe_id, kind, payload in _tasks(ctx):
        start = time.time()
        try:
            error = _evaluate(ctx, ev, payload)
        except FriedrichsError as e:
            logger.warning(f"lambda={lam:g} {probe_id}: {e}")
            failures.append(FailedPoint(lam=lam, probe_id=probe_id, reason=f"{type(e).__name__}: {e}"))
            continue
        if not math.isfinite(error):
            failures.append(FailedPoint(lam=lam, probe_id=probe_id, reason="non-finite error"))
            continue
        records.append(SweepRecord(
            experiment=sweep.experiment,
            lam=lam,
            probe_id=probe_id,
            probe_kind=kind,
            error=error,
            grid_fingerprint=ev.fingerprint,
            seconds=time.time() - start if ctx.config.logging.record_timing else 0.0,
        ))
    logger.info(f"lambda={lam:g}: {len(records)} record(s), {len(failures)} failure(s)")
    return records, failures


def fit_order(probe_id: str, lambdas: list[float], errors: list[float]) -> FitResult:
    """
    Least-squares slope of log(error) against log(lambda).

    Zero errors are dropped; with fewer than two usable points the order is
    left undefined and flagged in the note.
    """
    pts = [(lam, err) for lam, err in zip(lambdas, errors) if err > 0]
    if len(pts) < 2:
        return FitResult(probe_id=probe_id, points=len(pts), note="undefined: fewer than two positive errors")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    note = "" if len(pts) == len(errors) else f"{len(errors) - len(pts)} zero error(s) excluded"
    return FitResult(probe_id=probe_id, fitted_order=float(slope), residual=residual, points=len(pts), note=note)


def run_sweep(sweep: SweepConfig, config: Optional[Config] = None, jobs: Optional[int] = None) -> ConvergenceReport:
    """
    Execute a lambda sweep.

    Args:
        sweep: sweep configuration
        config: global configuration (tolerances, jobs, timing)
        jobs: worker threads; overrides config.jobs

    Returns:
        ConvergenceReport sorted by lambda (descending) then probe order
    """
    ctx = prepare_sweep(sweep, config)
    workers = jobs or ctx.config.jobs or os.cpu_count() or 1
    logger.info(f"Sweep {sweep.experiment} on {ctx.model.name}: {len(sweep.lambdas)} lambda(s)")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda lam: run_lambda(ctx, lam), sweep.lambdas))

    order = {probe_id: i for i, (probe_id, _, _) in enumerate(_tasks(ctx))}
    records = [r for recs, _ in results for r in recs]
    records.sort(key=lambda r: (-r.lam, order[r.probe_id]))
    failures = [f for _, fails in results for f in fails]

    fits = []
    for probe_id in order:
        rows = [r for r in records if r.probe_id == probe_id]
        fits.append(fit_order(probe_id, [r.lam for r in rows], [r.error for r in rows]))

    return ConvergenceReport(
        experiment=sweep.experiment,
        model=ctx.model.name,
        lambdas=list(sweep.lambdas),
        records=records,
        fits=fits,
        failures=failures,
        metadata={
            "grid": sweep.grid.model_dump(),
            "eigenvalue": ctx.model.small.eigenvalue(sweep.eigenvalue),
            "fingerprints": {f"{r.lam:g}": r.grid_fingerprint for r in records},
            "davies_route": ctx.davies.route,
            "tolerances": sweep.tolerances,
            "seed": ctx.config.seed,
            "notes": [PROBE_NOTE] if ctx.probes else [],
        },
    )
