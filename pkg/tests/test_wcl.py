"""
Tests for the weak coupling limit experiments on small lambda-adapted grids.

For the Lorentzian model the reduced resolvent at z = i is exactly
(i + i/(1 + lambda^2))^{-1} in the continuum, so errors shrink like lambda^2/4
down to a floor set by the asymptotic extent.
"""

import math

import numpy as np
import pytest

from src.catalog import load_model
from src.config import GridPolicy, LinalgConfig
from src.davies import closed_form
from src.dilation import build_system
from src.errors import GridMismatch, OverflowGuard
from src.model import AsymptoticGrid, build_grid
from src.wcl import (
    build_J,
    default_t_samples,
    extended_dynamics_error,
    extended_offsector_norm,
    extended_resolvent_difference,
    extended_resolvent_error,
    filon_transform,
    interaction_auxiliary_error,
    interaction_picture_error,
    laplace_averaged_error,
    prepare,
    probe_family,
    reduced_dynamics_error,
    reduced_offsector_norm,
    reduced_resolvent_error,
    semigroup_gap,
    weak_uniform_error,
)

LAMBDAS = (0.4, 0.2, 0.1)


@pytest.fixture(scope="module")
def lorentzian():
    return load_model("builtin:lorentzian")


@pytest.fixture(scope="module")
def policy():
    return GridPolicy(dy=0.1, extent=40.0)


@pytest.fixture(scope="module")
def davies(lorentzian):
    return closed_form(lorentzian)


@pytest.fixture(scope="module")
def system(davies, policy):
    return build_system(davies, AsymptoticGrid.from_policy(policy))


@pytest.fixture(scope="module")
def evolutions(lorentzian, system, policy):
    """One ScaledEvolution per lambda, shared by the sweep-style tests."""
    return {lam: prepare(lorentzian, lam, system, policy=policy) for lam in LAMBDAS}


@pytest.fixture
def small_probe(system):
    psi = np.zeros(system.dim, dtype=complex)
    psi[0] = 1.0
    return psi


def _strictly_decreasing(values):
    return all(a > b for a, b in zip(values, values[1:]))


# ============================================================================
# Scaling map
# ============================================================================

def test_scaling_map_is_partial_isometry(evolutions, system):
    """Test J*J = 1 on the kept asymptotic nodes."""
    ev = evolutions[0.2]
    J = ev.J
    rng = np.random.default_rng(3)
    psi = rng.standard_normal(system.dim) + 1j * rng.standard_normal(system.dim)
    assert np.allclose(J.adjoint(J.apply(psi)), psi * J.support)
    M = J.matrix()
    assert M.shape == (J.phys_dim, J.asym_dim)
    assert np.allclose(M.T @ M, np.diag(J.support.astype(float)))


def test_scaled_nodes_all_kept_for_small_lambda(evolutions, system):
    """Test full support of J and the grid fingerprint at lambda = 0.1."""
    assert evolutions[0.1].J.support.all()
    assert evolutions[0.1].fingerprint == evolutions[0.1].disc.grid.fingerprint()


def test_build_J_rejects_mismatched_grids(lorentzian, system, policy):
    """Test GridMismatch for a wrong lambda or a foreign asymptotic grid."""
    grid = build_grid(lorentzian, 0.2, policy, asym=system.sectors[0].grid)
    with pytest.raises(GridMismatch):
        build_J(lorentzian, grid, system, 0.3)
    other = build_grid(lorentzian, 0.2, policy, asym=AsymptoticGrid.uniform(0.1, 20.0))
    with pytest.raises(GridMismatch):
        build_J(lorentzian, other, system, 0.2)


# ============================================================================
# Probes
# ============================================================================

def test_probe_family(system):
    """Test probe ids, unit norms and seed reproducibility."""
    probes = probe_family(system, widths=(1.0, 2.0), seeds=(0, 1))
    ids = [p.probe_id for p in probes]
    assert ids == ["small-0", "gaussian-1", "gaussian-2", "random-0", "random-1"]
    for p in probes:
        assert np.linalg.norm(p.vector) == pytest.approx(1.0)
    again = probe_family(system, kinds=["random"], seeds=(1,))
    assert np.array_equal(again[0].vector, probes[-1].vector)


def test_random_vectors_follow_base_seed(system):
    """Test that the base seed changes random vectors but not their ids."""
    first = probe_family(system, kinds=["random"], seeds=(0, 1), base_seed=7)
    second = probe_family(system, kinds=["random"], seeds=(0, 1), base_seed=8)
    assert [p.probe_id for p in first] == [p.probe_id for p in second] == ["random-0", "random-1"]
    assert not np.allclose(first[0].vector, second[0].vector)
    repeat = probe_family(system, kinds=["random"], seeds=(0, 1), base_seed=7)
    assert np.array_equal(repeat[1].vector, first[1].vector)


# ============================================================================
# Reduced limits
# ============================================================================

def test_reduced_resolvent_converges(evolutions, davies):
    """Test the lambda^2/4 decay of the reduced resolvent error."""
    errors = [reduced_resolvent_error(evolutions[lam], 1j, davies) for lam in LAMBDAS]
    assert _strictly_decreasing(errors)
    assert errors[-1] < 0.02
    # lambda^2/4 leading behaviour at the coarsest lambda
    assert errors[0] == pytest.approx(0.16 / (2 * 2.16), rel=0.2)


def test_reduced_resolvent_needs_upper_half_plane(evolutions, davies):
    """Test that Im z < 0 is refused."""
    with pytest.raises(ValueError):
        reduced_resolvent_error(evolutions[0.4], -1j, davies)


def test_reduced_dynamics_converges(evolutions, davies):
    """Test decay of the reduced dynamics error at T = 1."""
    ts = default_t_samples(1.0, 21)
    errors = [reduced_dynamics_error(evolutions[lam], davies.total, 1.0, ts) for lam in LAMBDAS]
    assert _strictly_decreasing(errors)
    assert errors[-1] <= 0.05


def test_reduced_dynamics_sample_guards(evolutions, davies):
    """Test too few samples and samples beyond T."""
    with pytest.raises(ValueError):
        reduced_dynamics_error(evolutions[0.4], davies.total, 1.0, np.linspace(0, 1, 5))
    with pytest.raises(ValueError):
        reduced_dynamics_error(evolutions[0.4], davies.total, 1.0, np.linspace(0, 2, 21))


def test_semigroup_gap_is_lambda_zero_anchor(davies):
    """Test sup_t |1 - e^{-t}| on [0, 1]."""
    assert semigroup_gap(davies.total, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-6)


# ============================================================================
# Extended limits
# ============================================================================

def test_extended_resolvent_converges(evolutions):
    """Test decay of the extended resolvent error."""
    errors = [extended_resolvent_error(evolutions[lam], 1j) for lam in LAMBDAS]
    assert _strictly_decreasing(errors)


def test_extended_corner_is_reduced_resolvent(evolutions, davies):
    """Test that the E corner of the extended difference is the reduced error."""
    for lam in LAMBDAS:
        ev = evolutions[lam]
        corner = extended_resolvent_difference(ev, 1j)[0, 0]
        assert abs(corner) == pytest.approx(reduced_resolvent_error(ev, 1j, davies), abs=1e-12)


def test_extended_dynamics_converges(evolutions, small_probe):
    """Test decay of the extended dynamics error on the E basis vector."""
    errors = [extended_dynamics_error(evolutions[lam], 1.0, small_probe) for lam in LAMBDAS]
    assert _strictly_decreasing(errors)


def test_extended_dynamics_compresses_to_reduced(evolutions, small_probe):
    """Test that the E component of the extended evolution is the reduced propagator."""
    t = 1.0
    for lam in LAMBDAS:
        ev = evolutions[lam]
        s = t / lam ** 2
        reduced = ev.model.small.phase(s) @ ev.eig.compress(np.exp(-1j * s * ev.eig.eigenvalues), np.arange(1))
        extended = ev.ren_phase(t, ev.evolve(t, small_probe))
        assert extended[0] == pytest.approx(reduced[0, 0], abs=1e-12)


def test_interaction_auxiliary_is_exact_on_kept_nodes(evolutions, system):
    """Test that free evolutions agree exactly where J is isometric."""
    probes = probe_family(system, kinds=["small", "gaussian"], widths=(1.0,))
    for p in probes:
        assert interaction_auxiliary_error(evolutions[0.1], 1.0, p.vector) < 1e-10


def test_interaction_picture_matches_extended_on_small_probe(evolutions, small_probe):
    """Test that both pictures agree on an E vector."""
    ev = evolutions[0.2]
    # on the E component both pictures carry the same phase
    assert interaction_picture_error(ev, 1.0, small_probe) == pytest.approx(
        extended_dynamics_error(ev, 1.0, small_probe), rel=1e-6
    )


def test_weak_uniform_bounded_by_strong(evolutions, small_probe):
    """Test the matrix-element bound by the vector error."""
    ev = evolutions[0.2]
    weak = weak_uniform_error(ev, small_probe, small_probe, 1.0, t_points=21)
    strong = max(extended_dynamics_error(ev, t, small_probe) for t in default_t_samples(1.0, 21))
    assert weak <= strong + 1e-12


# ============================================================================
# Laplace-averaged limit
# ============================================================================

def test_filon_transform_exact_for_linear():
    """Test exactness for a linear f, including the small-omega branch."""
    t = np.linspace(0.0, 1.0, 11)
    omega = np.array([0.0, 0.003, 5.0, 40.0])
    out = filon_transform(t, t, omega)
    for w, value in zip(omega, out):
        if w == 0:
            exact = 0.5
        else:
            exact = np.exp(1j * w) / (1j * w) + (np.exp(1j * w) - 1) / w ** 2
        assert value == pytest.approx(exact, abs=1e-12)


def test_filon_transform_rejects_bad_grid():
    """Test non-uniform and single-point grids."""
    with pytest.raises(ValueError):
        filon_transform(np.ones(3), np.array([0.0, 0.1, 0.3]), np.array([1.0]))
    with pytest.raises(ValueError):
        filon_transform(np.ones(1), np.array([0.0]), np.array([1.0]))


def test_laplace_averaged_error(evolutions):
    """Test decay of the averaged error and zero for f = 0."""
    t = np.linspace(0.0, 1.0, 21)
    f = 1.0 - np.abs(2.0 * t - 1.0)
    coarse = laplace_averaged_error(evolutions[0.4], f, t, k=20.0)
    fine = laplace_averaged_error(evolutions[0.1], f, t, k=20.0)
    assert fine < coarse
    assert laplace_averaged_error(evolutions[0.4], np.zeros_like(t), t) == 0.0


# ============================================================================
# Two-level cross blocks
# ============================================================================

def test_two_level_offsector_blocks_vanish():
    """Test that the reduced e' = 1 block falls like lambda^2/2."""
    model = load_model("builtin:two-level")
    policy = GridPolicy(dy=0.1, extent=20.0)
    sys = build_system(closed_form(model), AsymptoticGrid.from_policy(policy))
    norms = [reduced_offsector_norm(prepare(model, lam, sys, policy=policy, e=-1.0), 1j) for lam in LAMBDAS]
    assert _strictly_decreasing(norms)
    # the e' = 1 block sits at distance 2/lambda^2 in scaled units
    assert norms[-1] == pytest.approx(0.01 / 2, rel=0.2)


def test_two_level_extended_offsector_decays():
    """Test that the extended e' = 1 sectors vanish as lambda decreases."""
    model = load_model("builtin:two-level")
    policy = GridPolicy(dy=0.1, extent=20.0)
    sys = build_system(closed_form(model), AsymptoticGrid.from_policy(policy))
    norms = [extended_offsector_norm(prepare(model, lam, sys, policy=policy, e=-1.0), 1j) for lam in LAMBDAS]
    assert _strictly_decreasing(norms)
    assert norms[-1] < 0.02


def test_extended_offsector_empty_for_one_level(evolutions):
    """Test a zero norm when every row belongs to the reference sector."""
    assert extended_offsector_norm(evolutions[0.2], 1j) == 0.0


# ============================================================================
# Numerical settings
# ============================================================================

def test_prepare_carries_linalg_settings(lorentzian, system, policy, davies):
    """Test that the Hermitian tolerance and overflow guard reach the evolution."""
    ev = prepare(lorentzian, 0.4, system, policy=policy, linalg=LinalgConfig(hermitian_tol=1e-9, overflow_guard=1e-6))
    assert ev.hermitian_tol == 1e-9
    assert ev.overflow_guard == 1e-6
    with pytest.raises(OverflowGuard):
        reduced_dynamics_error(ev, davies.total, 1.0, default_t_samples(1.0, 21))
