"""
Weak coupling limit experiments.

The scaling map J_lambda identifies asymptotic nodes (e, y_j) with physical
nodes e + lambda^2 y_j of the lambda-adapted grid. Every error below is
computed from one Hermitian eigendecomposition of H_lambda per lambda, kept in
a ScaledEvolution context and reused across z, t and probes.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .config import GridPolicy, LinalgConfig
from .davies import DaviesGenerator
from .dilation import AsymptoticSystem, build_cutoff, group_Ut, resolvent_Q
from .errors import GridMismatch
from .linalg import HERMITIAN_TOL, OVERFLOW_GUARD, HermitianEig, exp_generator, hermitian_eig, op_norm, resolve
from .model import BACKGROUND, DiscretizedFriedrichs, FriedrichsModel, ReservoirGrid, assemble, build_grid

logger = logging.getLogger(__name__)


# ============================================================================
# Scaling map J_lambda
# ============================================================================

@dataclass(frozen=True)
class ScalingMap:
    """
    0/1 partial isometry from Z to H_lambda stored as matched row indices.

    Row asym_rows[i] of Z maps to row phys_rows[i] of H_lambda; the first
    small_dim pairs are the identity on E. Asymptotic rows not listed are Absent.
    """

    lam: float
    phys_rows: np.ndarray
    asym_rows: np.ndarray
    phys_dim: int
    asym_dim: int
    small_dim: int

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """J psi."""
        psi = np.asarray(psi, dtype=complex)
        out = np.zeros(self.phys_dim, dtype=complex)
        out[self.phys_rows] = psi[self.asym_rows]
        return out

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        """J* x."""
        x = np.asarray(x, dtype=complex)
        out = np.zeros(self.asym_dim, dtype=complex)
        out[self.asym_rows] = x[self.phys_rows]
        return out

    def matrix(self) -> np.ndarray:
        J = np.zeros((self.phys_dim, self.asym_dim))
        J[self.phys_rows, self.asym_rows] = 1.0
        return J

    @property
    def support(self) -> np.ndarray:
        """Indicator of the asymptotic rows J does not annihilate."""
        mask = np.zeros(self.asym_dim, dtype=bool)
        mask[self.asym_rows] = True
        return mask


def build_J(model: FriedrichsModel, grid: ReservoirGrid, sys: AsymptoticSystem, lam: float) -> ScalingMap:
    """
    Scaling map for the lambda-adapted grid.

    Raises:
        GridMismatch: If the grid was built from another asymptotic grid, for
            other eigenvalues, or for another lambda
    """
    if abs(grid.lam - lam) > 1e-15 * max(1.0, lam):
        raise GridMismatch(f"grid built for lambda={grid.lam:g}, J requested for {lam:g}")
    if len(grid.eigenvalues) != len(sys.sectors) or any(
        abs(a - s.e) > 1e-12 * max(1.0, abs(a)) for a, s in zip(grid.eigenvalues, sys.sectors)
    ):
        raise GridMismatch("grid and asymptotic system disagree on the eigenvalues of E")
    for sector in sys.sectors:
        if sector.grid.fingerprint() != grid.asymptotic_key:
            raise GridMismatch(f"sector e={sector.e:g} uses a different asymptotic grid")

    d = model.dim_e
    phys = [np.arange(d)]
    asym = [np.arange(d)]
    offsets = grid.offsets
    for s, sector in enumerate(sys.sectors):
        nodes = grid.scaled_nodes(s)
        if len(nodes) == 0 or sector.fiber_dim == 0:
            continue
        dims = grid.fiber_dims[nodes]
        if np.any(dims != sector.fiber_dim):
            raise GridMismatch(f"fiber dimension changes inside the scaled zone of e={sector.e:g}")
        f = np.arange(sector.fiber_dim)
        phys.append((d + offsets[nodes])[:, None] + f[None, :])
        asym.append((sector.offset + grid.asym_index[nodes] * sector.fiber_dim)[:, None] + f[None, :])

    return ScalingMap(
        lam=lam,
        phys_rows=np.concatenate([p.ravel() for p in phys]),
        asym_rows=np.concatenate([a.ravel() for a in asym]),
        phys_dim=d + grid.size,
        asym_dim=sys.dim,
        small_dim=d,
    )


# ============================================================================
# Per-lambda context
# ============================================================================

@dataclass(frozen=True)
class ScaledEvolution:
    """H_lambda, its eigendecomposition and J for one lambda."""

    model: FriedrichsModel
    sys: AsymptoticSystem
    disc: DiscretizedFriedrichs
    J: ScalingMap
    e: float
    hermitian_tol: float = HERMITIAN_TOL
    overflow_guard: float = OVERFLOW_GUARD

    @property
    def lam(self) -> float:
        return self.disc.lam

    @cached_property
    def eig(self) -> HermitianEig:
        return hermitian_eig(self.disc.H, self.hermitian_tol)

    def evolve(self, t: float, psi: np.ndarray) -> np.ndarray:
        """J* e^{-it lambda^-2 H_lambda} J psi."""
        phys = self.eig.evolve(t, self.J.apply(psi), scale=self.lam ** 2)
        return self.J.adjoint(phys)

    def ren_phase(self, t: float, psi: np.ndarray) -> np.ndarray:
        """e^{it lambda^-2 Z_ren} psi."""
        s = t / self.lam ** 2
        d = self.sys.small_dim
        out = np.asarray(psi, dtype=complex).copy()
        out[:d] = self.sys.small.phase(s) @ out[:d]
        out[d:] = np.exp(1j * s * self.sys.Z_ren) * out[d:]
        return out

    def free_phase(self, t: float, x: np.ndarray) -> np.ndarray:
        """e^{it lambda^-2 H_0} on the physical space."""
        s = t / self.lam ** 2
        d = self.sys.small_dim
        out = np.asarray(x, dtype=complex).copy()
        out[:d] = self.sys.small.phase(s) @ out[:d]
        out[d:] = np.exp(1j * s * self.disc.reservoir_diagonal) * out[d:]
        return out

    @property
    def fingerprint(self) -> str:
        return self.disc.grid.fingerprint()


def prepare(model: FriedrichsModel, lam: float, sys: AsymptoticSystem,
            policy: Optional[GridPolicy] = None, e: Optional[float] = None,
            linalg: Optional[LinalgConfig] = None) -> ScaledEvolution:
    """Build grid, H_lambda and J against the asymptotic grids of sys."""
    policy = policy or GridPolicy()
    linalg = linalg or LinalgConfig()
    asym = sys.sectors[0].grid
    grid = build_grid(model, lam, policy, asym=asym)
    disc = assemble(model, grid, lam)
    J = build_J(model, grid, sys, lam)
    logger.info(f"lambda={lam:g}: {disc.small_dim + grid.size} rows, {int(np.sum(grid.sector != BACKGROUND))} scaled nodes")
    return ScaledEvolution(model=model, sys=sys, disc=disc, J=J, e=model.small.eigenvalue(e),
                           hermitian_tol=linalg.hermitian_tol, overflow_guard=linalg.overflow_guard)


# ============================================================================
# Probes
# ============================================================================

@dataclass(frozen=True)
class Probe:
    probe_id: str
    kind: str
    vector: np.ndarray


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def probe_family(
    sys: AsymptoticSystem,
    kinds: Sequence[str] = ("small", "gaussian", "random"),
    widths: Sequence[float] = (0.5, 1.0, 2.0),
    seeds: Sequence[int] = (0,),
    e: Optional[float] = None,
    base_seed: int = 0,
) -> list[Probe]:
    """
    Unit probe vectors on Z: the E basis, Gaussian packets of the given widths
    in the first fiber row of sector e, and seeded random vectors under a broad
    Gaussian envelope. Random probe `seed` draws from the stream (base_seed, seed).
    """
    probes = []
    d = sys.small_dim
    if "small" in kinds:
        for i in range(d):
            v = np.zeros(sys.dim, dtype=complex)
            v[i] = 1.0
            probes.append(Probe(f"small-{i}", "small", v))

    sector = sys.sector(sys.small.eigenvalue(e))
    y = sector.grid.y
    if "gaussian" in kinds and sector.fiber_dim > 0:
        for w in widths:
            v = np.zeros(sys.dim, dtype=complex)
            v[sector.offset + np.arange(len(y)) * sector.fiber_dim] = sector.sqrt_weights * np.exp(-0.5 * (y / w) ** 2)
            probes.append(Probe(f"gaussian-{w:g}", "gaussian", _normalize(v)))

    if "random" in kinds:
        envelope = np.exp(-0.5 * (sys.reservoir_diagonal / 8.0) ** 2)
        for seed in seeds:
            rng = np.random.default_rng([base_seed, seed])
            v = rng.standard_normal(sys.dim) + 1j * rng.standard_normal(sys.dim)
            v[d:] *= envelope
            probes.append(Probe(f"random-{seed}", "random", _normalize(v)))
    return probes


# ============================================================================
# Reduced limits
# ============================================================================

def _scaled_resolvent_values(ev: ScaledEvolution, z: complex) -> np.ndarray:
    return 1.0 / (z - (ev.eig.eigenvalues - ev.e) / ev.lam ** 2)


def _reduced_difference(ev: ScaledEvolution, z: complex, davies: DaviesGenerator) -> tuple[np.ndarray, np.ndarray]:
    d = ev.sys.small_dim
    reduced = ev.eig.compress(_scaled_resolvent_values(ev, z), np.arange(d))
    proj = ev.model.small.projection(ev.e)
    target = resolve(davies.blocks[ev.e], z, proj)
    return reduced, target


def reduced_resolvent_error(ev: ScaledEvolution, z: complex, davies: DaviesGenerator) -> float:
    """||1_E (z - lambda^-2 (H_lambda - e))^{-1} 1_E - (z - Gamma_e)^{-1} 1_{E_e}||."""
    if z.imag <= 0:
        raise ValueError("reduced_resolvent_error needs Im z > 0")
    reduced, target = _reduced_difference(ev, z, davies)
    return op_norm(reduced - target)


def reduced_offsector_norm(ev: ScaledEvolution, z: complex) -> float:
    """Norm of the reduced resolvent on the eigenspaces e' != e."""
    d = ev.sys.small_dim
    reduced = ev.eig.compress(_scaled_resolvent_values(ev, z), np.arange(d))
    other = np.eye(d) - ev.model.small.projection(ev.e)
    return op_norm(other @ reduced @ other)


def default_t_samples(T: float, points: int = 21) -> np.ndarray:
    return np.linspace(0.0, T, points)


def reduced_dynamics_error(ev: ScaledEvolution, gamma: np.ndarray, T: float,
                           t_samples: Optional[Sequence[float]] = None) -> float:
    """max_t ||e^{it lambda^-2 E} 1_E e^{-it lambda^-2 H_lambda} 1_E - e^{-it Gamma}||."""
    ts = default_t_samples(T) if t_samples is None else np.asarray(t_samples, dtype=float)
    if len(ts) < 20:
        raise ValueError(f"need at least 20 t samples, got {len(ts)}")
    if ts.min() < 0 or ts.max() > T * (1 + 1e-12):
        raise ValueError("t samples must lie in [0, T]")
    d = ev.sys.small_dim
    rows = np.arange(d)
    worst = 0.0
    for t in ts:
        s = t / ev.lam ** 2
        reduced = ev.model.small.phase(s) @ ev.eig.compress(np.exp(-1j * s * ev.eig.eigenvalues), rows)
        worst = max(worst, op_norm(reduced - exp_generator(gamma, t, ev.overflow_guard)))
    return worst


def semigroup_gap(gamma: np.ndarray, T: float, t_samples: Optional[Sequence[float]] = None) -> float:
    """max_t ||I - e^{-it Gamma}||: the reduced dynamics error with H_lambda replaced by H_0."""
    ts = default_t_samples(T) if t_samples is None else np.asarray(t_samples, dtype=float)
    eye = np.eye(gamma.shape[0])
    return max(op_norm(eye - exp_generator(gamma, t)) for t in ts)


# ============================================================================
# Extended limits
# ============================================================================

def _sector_mask(ev: ScaledEvolution) -> np.ndarray:
    """1_e as a matrix on Z: P_e on E and the identity on the reservoir rows of e."""
    sys = ev.sys
    d = sys.small_dim
    mask = np.zeros((sys.dim, sys.dim), dtype=complex)
    mask[:d, :d] = ev.model.small.projection(ev.e)
    rows = sys.sector(ev.e).rows
    mask[rows, rows] = 1.0
    return mask


def _compressed_resolvent(ev: ScaledEvolution, z: complex) -> np.ndarray:
    """J* (z - lambda^-2 (H_lambda - e))^{-1} J as a matrix on Z."""
    J = ev.J
    out = np.zeros((J.asym_dim, J.asym_dim), dtype=complex)
    out[np.ix_(J.asym_rows, J.asym_rows)] = ev.eig.compress(_scaled_resolvent_values(ev, z), J.phys_rows)
    return out


def extended_resolvent_difference(ev: ScaledEvolution, z: complex) -> np.ndarray:
    """J*(z - lambda^-2 (H_lambda - e))^{-1} J - 1_e Q(z) 1_e."""
    if z.imag <= 0:
        raise ValueError("extended_resolvent_difference needs Im z > 0")
    one_e = _sector_mask(ev)
    return _compressed_resolvent(ev, z) - one_e @ resolvent_Q(ev.sys, z) @ one_e


def extended_resolvent_error(ev: ScaledEvolution, z: complex) -> float:
    return op_norm(extended_resolvent_difference(ev, z))


def extended_offsector_norm(ev: ScaledEvolution, z: complex) -> float:
    """Norm of the compressed resolvent on the sectors e' != e."""
    other = np.eye(ev.sys.dim) - _sector_mask(ev)
    return op_norm(other @ _compressed_resolvent(ev, z) @ other)


def filon_transform(f: np.ndarray, t_grid: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """
    int f(t) e^{i omega t} dt for the piecewise-linear interpolant of f on a
    uniform grid, exactly, for every omega.
    """
    f = np.asarray(f, dtype=complex)
    t_grid = np.asarray(t_grid, dtype=float)
    if len(f) != len(t_grid) or len(t_grid) < 2:
        raise ValueError("f and t_grid must have the same length >= 2")
    h = t_grid[1] - t_grid[0]
    if not np.allclose(np.diff(t_grid), h, rtol=1e-9, atol=0.0):
        raise ValueError("t_grid must be uniform")
    omega = np.asarray(omega, dtype=float)
    theta = omega * h
    small = np.abs(theta) < 1e-2
    th = np.where(small, 1.0, theta)

    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = np.sinc(theta / (2 * math.pi)) ** 2
        left = np.where(small, 0.5 + 1j * theta / 6 - theta ** 2 / 24 - 1j * theta ** 3 / 120 + theta ** 4 / 720,
                        (1 + 1j * th - np.exp(1j * th)) / th ** 2)
        right = np.where(small, 0.5 - 1j * theta / 6 - theta ** 2 / 24 + 1j * theta ** 3 / 120 + theta ** 4 / 720,
                         (1 - 1j * th - np.exp(-1j * th)) / th ** 2)

    phases = np.exp(1j * np.multiply.outer(omega, t_grid))
    out = h * sinc * (phases[:, 1:-1] @ f[1:-1])
    out += h * left * phases[:, 0] * f[0]
    out += h * right * phases[:, -1] * f[-1]
    return out


def laplace_averaged_error(ev: ScaledEvolution, f: np.ndarray, t_grid: np.ndarray,
                           k: Optional[float] = None) -> float:
    """
    ||int f(t) e^{it lambda^-2 Z_ren} J* e^{-it lambda^-2 H_lambda} J dt - int f(t) e^{-itZ_k} dt||
    on E (+) {|y| <= k}, both integrals exact for the interpolant of f.
    """
    f = np.asarray(f, dtype=complex)
    sys = ev.sys
    J = ev.J
    d = sys.small_dim
    if not np.any(f):
        return 0.0

    w = ev.eig.eigenvalues
    sub = ev.eig.vectors[J.phys_rows]
    ren_rows = np.concatenate([np.full(d, np.nan), sys.Z_ren])[J.asym_rows]

    averaged = np.zeros((sys.dim, sys.dim), dtype=complex)
    small_block = np.zeros((d, len(J.asym_rows)), dtype=complex)
    for e, proj in zip(sys.small.eigenvalues, sys.small.projections):
        weights = filon_transform(f, t_grid, (e - w) / ev.lam ** 2)
        block = (sub * weights) @ sub.conj().T
        rows = np.flatnonzero(ren_rows == e)
        averaged[np.ix_(J.asym_rows[rows], J.asym_rows)] = block[rows]
        small_block += proj @ block[:d]
    averaged[np.ix_(np.arange(d), J.asym_rows)] = small_block

    cutoff = build_cutoff(sys, k if k is not None else max(s.grid.extent for s in sys.sectors))
    weights = filon_transform(f, t_grid, -cutoff.eig.eigenvalues)
    reference = (cutoff.eig.vectors * weights) @ cutoff.eig.vectors.conj().T
    idx = cutoff.index
    return op_norm(averaged[np.ix_(idx, idx)] - reference)


def extended_dynamics_error(ev: ScaledEvolution, t: float, psi: np.ndarray, **group_kwargs) -> float:
    """||e^{it lambda^-2 Z_ren} J* e^{-it lambda^-2 H_lambda} J psi - U_t psi||."""
    lhs = ev.ren_phase(t, ev.evolve(t, psi))
    return float(np.linalg.norm(lhs - group_Ut(ev.sys, t, psi, **group_kwargs)))


def interaction_picture_error(ev: ScaledEvolution, t: float, psi: np.ndarray, **group_kwargs) -> float:
    """||J* e^{it lambda^-2 H_0} e^{-it lambda^-2 H_lambda} J psi - e^{itZ_R} U_t psi||."""
    phys = ev.eig.evolve(t, ev.J.apply(psi), scale=ev.lam ** 2)
    lhs = ev.J.adjoint(ev.free_phase(t, phys))
    rhs = group_Ut(ev.sys, t, psi, **group_kwargs)
    d = ev.sys.small_dim
    rhs[d:] *= np.exp(1j * t * ev.sys.reservoir_diagonal)
    return float(np.linalg.norm(lhs - rhs))


def interaction_auxiliary_error(ev: ScaledEvolution, t: float, psi: np.ndarray) -> float:
    """||J* e^{it lambda^-2 H_0} J e^{-it lambda^-2 Z_ren} psi - e^{itZ_R} psi||."""
    back = ev.ren_phase(-t, psi)
    lhs = ev.J.adjoint(ev.free_phase(t, ev.J.apply(back)))
    rhs = np.asarray(psi, dtype=complex).copy()
    d = ev.sys.small_dim
    rhs[d:] *= np.exp(1j * t * ev.sys.reservoir_diagonal)
    return float(np.linalg.norm(lhs - rhs))


def weak_uniform_error(ev: ScaledEvolution, psi: np.ndarray, psi2: np.ndarray, T: float,
                       t_points: int = 21, **group_kwargs) -> float:
    """max_t |<psi2| (e^{it lambda^-2 Z_ren} J* e^{-it lambda^-2 H_lambda} J - U_t) psi>|."""
    worst = 0.0
    for t in default_t_samples(T, t_points):
        lhs = ev.ren_phase(t, ev.evolve(t, psi))
        diff = lhs - group_Ut(ev.sys, t, psi, **group_kwargs)
        worst = max(worst, abs(np.vdot(psi2, diff)))
    return worst
