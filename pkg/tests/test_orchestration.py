"""
Tests for lambda sweeps: ordering, determinism under threads, failure capture
and the log-log order fit.
"""

import math

import numpy as np
import pytest

from src.config import Config, GridPolicy, SweepConfig, WCLConfig
from src.orchestration import PROBE_NOTE, fit_order, prepare_sweep, run_sweep


@pytest.fixture
def config():
    return Config()


@pytest.fixture
def grid():
    return GridPolicy(dy=0.1, extent=40.0)


# ============================================================================
# fit_order
# ============================================================================

def test_fit_order_exact_power_law():
    """Test slope 2 with zero residual on an exact power law."""
    lambdas = [0.4, 0.2, 0.1]
    fit = fit_order("z", lambdas, [3.0 * lam ** 2 for lam in lambdas])
    assert fit.fitted_order == pytest.approx(2.0)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.points == 3
    assert fit.note == ""


def test_fit_order_drops_zero_errors():
    """Test that zero errors are excluded and noted."""
    fit = fit_order("p", [0.4, 0.2, 0.1], [0.4, 0.2, 0.0])
    assert fit.fitted_order == pytest.approx(1.0)
    assert fit.points == 2
    assert "excluded" in fit.note


def test_fit_order_undefined_with_one_point():
    """Test an undefined order with one positive error."""
    fit = fit_order("p", [0.4, 0.2], [0.1, 0.0])
    assert fit.fitted_order is None
    assert fit.note.startswith("undefined")


# ============================================================================
# run_sweep
# ============================================================================

def test_reduced_resolvent_sweep(config, grid):
    """Test lambda ordering, decay and metadata of a reduced resolvent sweep."""
    sweep = SweepConfig(experiment="reduced_resolvent", lambdas=[0.2, 0.4, 0.1], grid=grid)
    report = run_sweep(sweep, config, jobs=2)

    assert report.lambdas == [0.4, 0.2, 0.1]
    assert [r.lam for r in report.records] == [0.4, 0.2, 0.1]
    assert report.records[0].probe_id == "z=0+1i"
    errors = report.errors_for("z=0+1i")
    assert errors[0] > errors[1] > errors[2]
    assert report.fits[0].fitted_order > 0.5
    assert report.metadata["davies_route"] == "closed"
    assert report.metadata["notes"] == []
    assert all(r.seconds == 0.0 for r in report.records)


def test_sweep_is_deterministic_across_jobs(config, grid):
    """Test identical records for one and two worker threads."""
    sweep = SweepConfig(experiment="reduced_dynamics", lambdas=[0.4, 0.2], grid=grid)
    serial = run_sweep(sweep, config, jobs=1)
    threaded = run_sweep(sweep, config, jobs=2)
    assert [(r.lam, r.probe_id, r.grid_fingerprint) for r in serial.records] == [
        (r.lam, r.probe_id, r.grid_fingerprint) for r in threaded.records
    ]
    for a, b in zip(serial.records, threaded.records):
        assert a.error == pytest.approx(b.error, rel=1e-10, abs=1e-14)


def test_vector_sweep_records_probe_note(config):
    """Test probe expansion and the probe-family note."""
    sweep = SweepConfig(
        experiment="interaction_auxiliary",
        lambdas=[0.2, 0.1],
        t=[0.5, 1.0],
        probes=["small", "gaussian"],
        grid=GridPolicy(dy=0.1, extent=20.0),
    )
    ctx = prepare_sweep(sweep, config)
    assert [p.probe_id for p in ctx.probes] == ["small-0", "gaussian-0.5", "gaussian-1", "gaussian-2"]

    report = run_sweep(sweep, config, jobs=1)
    assert report.metadata["notes"] == [PROBE_NOTE]
    assert len(report.records) == 2 * 4 * 2
    assert report.records[0].probe_id == "small-0@t=0.5"
    assert all(r.error < 1e-10 for r in report.records)


def test_setup_failure_is_collected(config):
    """Test that a failing lambda is reported while the others run."""
    sweep = SweepConfig(
        experiment="reduced_resolvent",
        lambdas=[20.0, 0.1],
        grid=GridPolicy(dy=0.1, extent=40.0, strict_extent=True),
    )
    report = run_sweep(sweep, config, jobs=1)
    assert [f.lam for f in report.failures] == [20.0]
    assert report.failures[0].reason.startswith("GridConflict")
    assert [r.lam for r in report.records] == [0.1]
    assert report.fits[0].fitted_order is None
    assert math.isfinite(report.records[0].error)



def test_sweep_falls_back_to_wcl_settings(grid):
    """Test that unset t_points and probe_seeds come from the wcl settings and the base seed reaches the random vectors."""
    config = Config(seed=5, wcl=WCLConfig(t_points=30, probe_seeds=[2, 3]))
    sweep = SweepConfig(experiment="extended_dynamics", lambdas=[0.2], probes=["random"], grid=grid)
    ctx = prepare_sweep(sweep, config)
    assert ctx.sweep.t_points == 30
    assert ctx.sweep.probe_seeds == [2, 3]
    assert [p.probe_id for p in ctx.probes] == ["random-2", "random-3"]

    other = prepare_sweep(sweep, Config(wcl=WCLConfig(probe_seeds=[2, 3])))
    assert not np.allclose(ctx.probes[0].vector, other.probes[0].vector)

    explicit = SweepConfig(experiment="extended_dynamics", lambdas=[0.2], probes=["random"], grid=grid,
                           t_points=25, probe_seeds=[])
    ctx = prepare_sweep(explicit, config)
    assert ctx.sweep.t_points == 25
    assert ctx.probes == []


def test_offsector_sweep_on_two_level():
    """Test the extended off-sector experiment and the seed in the metadata."""
    sweep = SweepConfig(
        experiment="extended_offsector",
        model="builtin:two-level",
        eigenvalue=-1.0,
        lambdas=[0.1, 0.4, 0.2],
        grid=GridPolicy(dy=0.1, extent=20.0),
    )
    report = run_sweep(sweep, Config(seed=4), jobs=1)
    assert not report.failures
    errors = report.errors_for("z=0+1i")
    assert errors[0] > errors[1] > errors[2]
    assert report.fits[0].fitted_order > 1.0
    assert report.metadata["seed"] == 4

@pytest.mark.slow
def test_reduced_dynamics_acceptance_sweep(config):
    """Test the Lorentzian reduced dynamics, T = 1, lambda in {0.4, ..., 0.1} on the CI grid."""
    sweep = SweepConfig(
        experiment="reduced_dynamics",
        lambdas=[0.4, 0.3, 0.2, 0.15, 0.1],
        grid=GridPolicy(dy=0.1, extent=100.0),
    )
    report = run_sweep(sweep, config)
    errors = report.errors_for("T=1")
    assert len(errors) == 5
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 0.05
