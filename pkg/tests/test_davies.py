"""
Tests for the Davies generator routes.

For the Lorentzian coupling |v(x)|^2 = 1/(pi(1+x^2)) every route converges to
Gamma_e = 1/(e + i), so e = 0 gives -i and e = 1 gives 1/2 - i/2.
"""

import dataclasses
import math

import numpy as np
import pytest

from src.catalog import load_model
from src.config import DaviesConfig, GridPolicy
from src.davies import (
    DaviesGenerator,
    cell_kernel,
    closed_form,
    dynamic,
    extract_nu,
    pv_integral,
    richardson,
    run_routes,
    stationary,
)
from src.errors import ExtrapolationUnstable, QuadratureFailure, RecurrenceGuard
from src.json_utils import decode_complex_matrix
from src.model import CouplingFunction, assemble, build_grid

BUMP = 0.1 / math.pi


@pytest.fixture(scope="module")
def lorentzian():
    return load_model("builtin:lorentzian")


@pytest.fixture
def fine_policy():
    """Scaled spacing 1e-3 at lambda = 0.1, dense background."""
    return GridPolicy(dy=0.1, extent=40.0, h_bg=0.01)


@pytest.fixture
def disc(lorentzian, fine_policy):
    grid = build_grid(lorentzian, 0.1, fine_policy)
    return assemble(lorentzian, grid, 0.1)


@pytest.fixture(scope="module")
def route_disc(lorentzian):
    """The grid run_routes builds with default settings (spacing 4.05e-4 near e)."""
    config = DaviesConfig()
    grid = build_grid(lorentzian, config.adapt_lambda, GridPolicy())
    return assemble(lorentzian, grid, config.adapt_lambda)


@pytest.fixture(scope="module")
def bumped(lorentzian):
    """Lorentzian |v|^2 plus the odd bump BUMP * x * exp(-x^2); v(0) is unchanged."""

    def func(xs, cell):
        v2 = 1.0 / (math.pi * (1.0 + xs ** 2)) + BUMP * xs * np.exp(-xs ** 2)
        return np.sqrt(v2)[:, None, None]

    coupling = CouplingFunction(func=func, holder_delta=1.0, bound=0.6, label="lorentzian+bump")
    return dataclasses.replace(lorentzian, name="lorentzian-bumped", coupling=coupling)


# ============================================================================
# Quadrature helpers
# ============================================================================

def test_pv_integral_constant():
    """Test P int_{-1}^{3} dx/x = ln 3."""
    value = pv_integral(lambda x: np.array(1.0), 0.0, (-1.0, 3.0), tol=1e-10)
    assert float(value) == pytest.approx(math.log(3.0), abs=1e-10)


def test_pv_integral_lorentzian_off_centre():
    """Test P int (pi(1+x^2))^{-1} / (x-1) dx = -1/2 on the model window."""
    value = pv_integral(lambda x: np.array(1.0 / (math.pi * (1.0 + x ** 2))), 1.0, (-200.0, 200.0), tol=1e-10)
    assert float(np.real(value)) == pytest.approx(-0.5, abs=1e-6)


def test_pv_integral_rejects_exterior_point():
    """Test that a singular point outside the window is refused."""
    with pytest.raises(QuadratureFailure):
        pv_integral(lambda x: np.array(1.0), 5.0, (-1.0, 3.0))


def test_richardson_exact_for_quadratic():
    """Test that the tableau removes a quadratic error expansion exactly."""
    eps = [0.1, 0.05, 0.025]
    values = [np.array([[2.0 + 3.0 * x + 5.0 * x ** 2]]) for x in eps]
    table = richardson(values, eps, delta=1.0)
    assert table[-1][-1][0, 0] == pytest.approx(2.0, abs=1e-12)


def test_cell_kernel_additive_and_limit():
    """Test that cell kernels add over subcells and tend to pi at large T."""
    T = 1e4
    whole = cell_kernel(np.array([-1.0]), np.array([1.0]), T)[0]
    parts = cell_kernel(np.array([-1.0, 0.0]), np.array([0.0, 1.0]), T).sum()
    assert whole == pytest.approx(parts, abs=1e-12)
    assert whole.real == pytest.approx(math.pi, abs=1e-3)
    assert abs(whole.imag) < 1e-12
    assert cell_kernel(np.array([0.0]), np.array([1.0]), 0.0)[0] == 0.0


# ============================================================================
# Closed form
# ============================================================================

def test_closed_form_lorentzian(lorentzian):
    """Test Gamma = -i for the centred Lorentzian."""
    gen = closed_form(lorentzian)
    assert gen.total[0, 0] == pytest.approx(-1j, abs=1e-6)
    assert gen.condition_residual() < 1e-10
    assert gen.dissipativity() <= 1e-12
    assert gen.route == "closed"


def test_closed_form_shifted():
    """Test Gamma = 1/2 - i/2 at e = 1, with the PV part -1/2 kept in diagnostics."""
    gen = closed_form(load_model("builtin:lorentzian-shifted"))
    assert gen.total[0, 0] == pytest.approx(0.5 - 0.5j, abs=1e-5)
    assert gen.diagnostics["pv"]["1"][0, 0].real == pytest.approx(-0.5, abs=1e-6)


def test_closed_form_two_level_is_block_diagonal():
    """Test one block per eigenvalue with no cross terms."""
    model = load_model("builtin:two-level")
    gen = closed_form(model)
    # E = diag(1, -1): index 0 carries e = 1, index 1 carries e = -1
    assert gen.total[0, 0] == pytest.approx(0.5 - 0.5j, abs=1e-5)
    assert gen.total[1, 1] == pytest.approx(-0.5 - 0.5j, abs=1e-5)
    assert abs(gen.total[0, 1]) < 1e-12
    assert set(gen.blocks) == {-1.0, 1.0}
    assert gen.nu.shape == (2, 2)


def test_closed_form_decoupled_is_zero():
    """Test Gamma = 0 for v = 0."""
    gen = closed_form(load_model("builtin:decoupled"))
    assert np.allclose(gen.total, 0.0)


def test_closed_form_fiber_jump_pole_term():
    """Test the pole term when the fiber dimension jumps away from e."""
    model = load_model("builtin:fiber-jump")
    gen = closed_form(model)
    assert gen.total[0, 0].imag == pytest.approx(-1.0, abs=1e-8)
    assert gen.condition_residual() < 1e-8


def test_extract_nu_lorentzian(lorentzian):
    """Test nu = 1/sqrt(pi) at e = 0."""
    nu = extract_nu(lorentzian)
    assert nu[0.0].shape == (1, 1)
    assert nu[0.0][0, 0] == pytest.approx(1 / math.sqrt(math.pi))


def test_odd_bump_shifts_only_the_pv_part(lorentzian, bumped):
    """Test that an odd bump keeps the pole term and moves Re Gamma by minus its own PV."""
    base = closed_form(lorentzian).total[0, 0]
    gen = closed_form(bumped)
    shift = float(np.real(pv_integral(lambda x: np.array(BUMP * x * np.exp(-x ** 2)), 0.0, (-200.0, 200.0),
                                      tol=1e-10)))
    assert shift == pytest.approx(BUMP * math.sqrt(math.pi), abs=1e-8)
    assert gen.total[0, 0].imag == pytest.approx(base.imag, abs=1e-8)
    assert gen.total[0, 0].real - base.real == pytest.approx(-shift, abs=1e-6)


# ============================================================================
# Stationary and dynamic routes
# ============================================================================

def test_stationary_converges_to_closed_form(route_disc):
    """Test the extrapolated stationary route within 1e-3 of -i."""
    gen = stationary(route_disc)
    assert abs(gen.total[0, 0] - (-1j)) <= 1e-3
    info = gen.diagnostics["0"]
    # raw values carry the O(eps) bias that extrapolation removes
    assert abs(info["raw"][0][0, 0] - (-1j)) > abs(gen.total[0, 0] - (-1j))
    assert "z_discrepancy" in info


def test_stationary_guards(disc):
    """Test the half-plane, ordering and grid-resolution guards."""
    with pytest.raises(ValueError):
        stationary(disc, z=-1j)
    with pytest.raises(ValueError):
        stationary(disc, epsilons=[0.025, 0.05])
    with pytest.raises(ExtrapolationUnstable):
        stationary(disc, epsilons=[0.02, 0.01, 0.005])


def test_dynamic_converges_to_closed_form(lorentzian, route_disc):
    """Test the dynamic route at T = 1e3 within 5e-3 of -i."""
    gen = dynamic(lorentzian, route_disc.grid, T=1e3)
    assert abs(gen.total[0, 0] - (-1j)) <= 5e-3
    assert gen.diagnostics["0"]["tail_estimate"] < 1e-2


def test_dynamic_with_odd_bump_matches_closed_form(bumped):
    """Test that the dynamic route sees the same PV shift as the closed form."""
    config = DaviesConfig()
    grid = build_grid(bumped, config.adapt_lambda, GridPolicy())
    gen = dynamic(bumped, grid, T=1e3)
    assert abs(gen.total[0, 0] - closed_form(bumped).total[0, 0]) <= 5e-3


def test_dynamic_zero_horizon(lorentzian, route_disc):
    """Test T = 0 gives the zero matrix."""
    gen = dynamic(lorentzian, route_disc.grid, T=0.0)
    assert np.allclose(gen.total, 0.0)


def test_dynamic_recurrence_guard(lorentzian, disc):
    """Test that T beyond the grid recurrence time is refused."""
    with pytest.raises(RecurrenceGuard):
        dynamic(lorentzian, disc.grid, T=1e4)
    with pytest.raises(ValueError):
        dynamic(lorentzian, disc.grid, T=-1.0)


# ============================================================================
# Route comparison
# ============================================================================

def test_run_routes_all_agree(lorentzian):
    """Test route agreement with default settings: 1e-3 stationary, 5e-3 dynamic."""
    report, generators = run_routes(lorentzian)
    assert set(generators) == {"closed", "stationary", "dynamic"}
    assert not report.failures
    assert report.cross_differences["closed-stationary"] <= 1e-3
    assert report.cross_differences["closed-dynamic"] <= 5e-3
    closed = next(r for r in report.routes if r.route == "closed")
    assert decode_complex_matrix(closed.total)[0, 0] == pytest.approx(-1j, abs=1e-6)


def test_run_routes_collects_failures(lorentzian, fine_policy):
    """Test that a failing route is reported while the others still run."""
    config = DaviesConfig(adapt_lambda=0.1, horizon=1e4)
    report, generators = run_routes(lorentzian, routes=["closed", "dynamic"], config=config, policy=fine_policy)
    assert "closed" in generators
    assert report.failures["dynamic"].startswith("RecurrenceGuard")


def test_run_routes_enforces_route_tol(lorentzian, monkeypatch):
    """Test that a closed form above route_tol is recorded as ConditionViolated."""
    monkeypatch.setattr(DaviesGenerator, "condition_residual", lambda self: 1e-6)
    report, generators = run_routes(lorentzian, routes=["closed"], config=DaviesConfig(route_tol=1e-10))
    assert "closed" not in generators
    assert report.failures["closed"].startswith("ConditionViolated")

    report, generators = run_routes(lorentzian, routes=["closed"], config=DaviesConfig(route_tol=1e-5))
    assert "closed" in generators


def test_run_routes_unknown_route(lorentzian):
    """Test that an unknown route name is a usage error."""
    with pytest.raises(ValueError):
        run_routes(lorentzian, routes=["magic"])
