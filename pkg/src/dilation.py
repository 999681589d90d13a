"""
Discretized dilation space Z = E (+) (+)_e L^2(R, h_e).

Builds the asymptotic system from a Davies generator and realizes the
renormalized resolvent Q(z), the cutoff operators Z_k, the closed-form group
U_t, the quadratic forms Z^+/Z^-, domain vectors, the minimality criterion and
the scaling check.

Vector layout: the first dim E entries are the small system, then each sector
in eigenvalue order, node-major (node j, fiber row f).
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss

from .config import DilationConfig, GridPolicy, LinalgConfig
from .davies import DaviesGenerator
from .errors import ConditionViolated, DefectiveGenerator, FeshbachMismatch, FriedrichsError, GridIncompatible
from .linalg import (
    CONFLUENCE_THRESHOLD,
    OVERFLOW_GUARD,
    HermitianEig,
    exp_generator,
    hermitian_eig,
    op_norm,
    phi1,
    phi2,
    resolve,
)
from .model import AsymptoticGrid, SmallSystem
from .schemas import CutoffRow, DilationReport, IdentityCheck, MinimalityReport

logger = logging.getLogger(__name__)


# ============================================================================
# Asymptotic system
# ============================================================================

@dataclass(frozen=True)
class Sector:
    """Reservoir sector of one eigenvalue e: grid Y_e, fiber h_e and nu_e."""

    e: float
    grid: AsymptoticGrid
    nu: np.ndarray
    projection: np.ndarray
    offset: int

    @property
    def fiber_dim(self) -> int:
        return self.nu.shape[0]

    @property
    def size(self) -> int:
        return self.grid.size * self.fiber_dim

    @property
    def rows(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.size)

    @cached_property
    def basis(self) -> np.ndarray:
        """Orthonormal basis of Ran 1_{E_e}."""
        w, v = np.linalg.eigh(self.projection)
        return v[:, w > 0.5]

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.grid.u)


@dataclass(frozen=True)
class AsymptoticSystem:
    """Gamma, nu and the per-sector reservoirs of the dilation."""

    small: SmallSystem
    Gamma: np.ndarray
    sectors: tuple[Sector, ...]

    @property
    def small_dim(self) -> int:
        return self.small.dim

    @property
    def dim(self) -> int:
        return self.small_dim + sum(s.size for s in self.sectors)

    @property
    def nu(self) -> np.ndarray:
        return np.vstack([s.nu for s in self.sectors])

    @cached_property
    def reservoir_diagonal(self) -> np.ndarray:
        """Z_R on the reservoir rows."""
        parts = [np.repeat(s.grid.y, s.fiber_dim) for s in self.sectors]
        return np.concatenate(parts) if parts else np.empty(0)

    @cached_property
    def W(self) -> np.ndarray:
        """Coupling W with node-j rows sqrt(u_j) nu_e, shape (reservoir rows, dim E)."""
        parts = [np.kron(s.sqrt_weights[:, None], s.nu) for s in self.sectors]
        return np.vstack(parts) if parts else np.zeros((0, self.small_dim), dtype=complex)

    @cached_property
    def Z_ren(self) -> np.ndarray:
        """Renormalizing diagonal on reservoir rows (e per sector); E on the small system."""
        parts = [np.full(s.size, s.e) for s in self.sectors]
        return np.concatenate(parts) if parts else np.empty(0)

    @property
    def re_gamma(self) -> np.ndarray:
        return (self.Gamma + self.Gamma.conj().T) / 2

    def sector(self, e: float) -> Sector:
        return self.sectors[self.small.sector_index(e)]

    def split(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        psi = np.asarray(psi, dtype=complex)
        return psi[:self.small_dim], psi[self.small_dim:]

    def condition_residual(self) -> float:
        g = self.Gamma
        nu = self.nu
        return float(np.linalg.norm((g - g.conj().T) / 2j + math.pi * nu.conj().T @ nu, 2))


def build_system(
    davies: DaviesGenerator,
    grids: Union[AsymptoticGrid, Mapping[float, AsymptoticGrid]],
    condition_tol: float = 1e-8,
) -> AsymptoticSystem:
    """
    Assemble the asymptotic system from Davies data and per-sector grids.

    Args:
        davies: Davies generator (closed form recommended)
        grids: one grid for all sectors or a map e -> grid
        condition_tol: bound on ||(Gamma - Gamma*)/2i + pi nu* nu||

    Raises:
        ConditionViolated: If the dissipativity condition fails
    """
    residual = davies.condition_residual()
    if residual > condition_tol:
        raise ConditionViolated(
            f"||Im Gamma + pi nu* nu|| = {residual:.3e} exceeds {condition_tol:.1e} (route {davies.route})"
        )
    small = davies.small
    sectors = []
    offset = small.dim
    for e, proj in zip(small.eigenvalues, small.projections):
        grid = grids if isinstance(grids, AsymptoticGrid) else grids[e]
        nu = davies.nu_blocks.get(e, np.zeros((0, small.dim), dtype=complex))
        sector = Sector(e=e, grid=grid, nu=np.asarray(nu, dtype=complex), projection=proj, offset=offset)
        sectors.append(sector)
        offset += sector.size
    system = AsymptoticSystem(small=small, Gamma=np.asarray(davies.total, dtype=complex), sectors=tuple(sectors))
    logger.info(f"Asymptotic system: dim {system.dim}, {len(sectors)} sector(s)")
    return system


# ============================================================================
# Renormalized resolvent Q(z)
# ============================================================================

def _small_resolvent(gamma: np.ndarray, z: complex) -> np.ndarray:
    return resolve(gamma, z, np.eye(gamma.shape[0], dtype=complex))


def resolvent_Q(sys: AsymptoticSystem, z: complex) -> np.ndarray:
    """
    Q(z) as a dense matrix; Q(z) = Q(conj z)* for Im z < 0.

    Blocks: (z-Gamma)^{-1}, (z-Gamma)^{-1} W* D, D W (z-Gamma)^{-1},
    D + D W (z-Gamma)^{-1} W* D with D = (z - Z_R)^{-1}.
    """
    if z.imag == 0:
        raise ValueError("Q(z) needs Im z != 0")
    if z.imag < 0:
        return resolvent_Q(sys, z.conjugate()).conj().T
    G = _small_resolvent(sys.Gamma, z)
    D = 1.0 / (z - sys.reservoir_diagonal)
    DW = D[:, None] * sys.W
    WD = sys.W.conj().T * D[None, :]
    d = sys.small_dim
    Q = np.zeros((sys.dim, sys.dim), dtype=complex)
    Q[:d, :d] = G
    Q[:d, d:] = G @ WD
    Q[d:, :d] = DW @ G
    Q[d:, d:] = DW @ G @ WD
    Q[d:, d:][np.diag_indices(len(D))] += D
    return Q


def apply_Q(sys: AsymptoticSystem, z: complex, x: np.ndarray) -> np.ndarray:
    """Q(z) x without forming the matrix."""
    if z.imag == 0:
        raise ValueError("Q(z) needs Im z != 0")
    if z.imag < 0:
        # Q(z) = Q(conj z)^*; apply through the adjoint blocks
        zc = z.conjugate()
        G = _small_resolvent(sys.Gamma, zc).conj().T
        D = np.conj(1.0 / (zc - sys.reservoir_diagonal))
    else:
        G = _small_resolvent(sys.Gamma, z)
        D = 1.0 / (z - sys.reservoir_diagonal)
    u, f = sys.split(x)
    a = u + sys.W.conj().T @ (D * f)
    out_u = G @ a
    return np.concatenate([out_u, D * f + D * (sys.W @ out_u)])


# ============================================================================
# Cutoff operators Z_k
# ============================================================================

@dataclass(frozen=True)
class CutoffOperator:
    """Z_k on E (+) {|y| <= k}: [[Re Gamma, W_k*], [W_k, Z_R,k]]."""

    k: float
    Zk: np.ndarray
    rows: np.ndarray
    small_dim: int

    @property
    def index(self) -> np.ndarray:
        """Rows of the full space that Z_k acts on."""
        return np.concatenate([np.arange(self.small_dim), self.small_dim + self.rows])

    @cached_property
    def eig(self) -> HermitianEig:
        return hermitian_eig(self.Zk)

    def evolve(self, t: float, psi: np.ndarray) -> np.ndarray:
        """e^{-itZ_k} psi on the full space (removed nodes have Z_R,k = 0)."""
        out = np.array(psi, dtype=complex)
        idx = self.index
        out[idx] = self.eig.evolve(t, out[idx])
        return out


def _cutoff_rows(sys: AsymptoticSystem, k: float) -> np.ndarray:
    extent = max(s.grid.extent for s in sys.sectors)
    if k > extent * (1 + 1e-12):
        raise ValueError(f"cutoff k={k:g} exceeds the asymptotic extent {extent:g}")
    return np.flatnonzero(np.abs(sys.reservoir_diagonal) <= k)


def build_cutoff(sys: AsymptoticSystem, k: float) -> CutoffOperator:
    """Z_k restricted to the small system and the nodes with |y| <= k."""
    rows = _cutoff_rows(sys, k)
    d = sys.small_dim
    Wk = sys.W[rows]
    n = d + len(rows)
    Zk = np.zeros((n, n), dtype=complex)
    Zk[:d, :d] = sys.re_gamma
    Zk[d:, :d] = Wk
    Zk[:d, d:] = Wk.conj().T
    Zk[d:, d:][np.diag_indices(len(rows))] = sys.reservoir_diagonal[rows]
    return CutoffOperator(k=k, Zk=Zk, rows=rows, small_dim=d)


@dataclass(frozen=True)
class CutoffResolvent:
    k: float
    direct: np.ndarray
    feshbach: np.ndarray
    mismatch: float


def _feshbach_parts(sys: AsymptoticSystem, rows: np.ndarray, z: complex):
    Wk = sys.W[rows]
    D = 1.0 / (z - sys.reservoir_diagonal[rows])
    gamma_k = sys.re_gamma + Wk.conj().T @ (D[:, None] * Wk)
    Gk = _small_resolvent(gamma_k, z)
    return Wk, D, Gk


def resolvent_Zk(sys: AsymptoticSystem, k: float, z: complex, tol: float = 1e-9) -> CutoffResolvent:
    """
    (z - Z_k)^{-1} by direct inversion, checked against the Feshbach
    reconstruction through Gamma_k(z) = Re Gamma + W_k*(z - Z_R)^{-1} W_k.

    Raises:
        FeshbachMismatch: If the two differ by more than tol (Frobenius)
    """
    if z.imag == 0:
        raise ValueError("resolvent_Zk needs Im z != 0")
    cutoff = build_cutoff(sys, k)
    n = cutoff.Zk.shape[0]
    direct = resolve(cutoff.Zk, z, np.eye(n, dtype=complex))

    d = sys.small_dim
    Wk, D, Gk = _feshbach_parts(sys, cutoff.rows, z)
    DW = D[:, None] * Wk
    WD = Wk.conj().T * D[None, :]
    fesh = np.zeros((n, n), dtype=complex)
    fesh[:d, :d] = Gk
    fesh[:d, d:] = Gk @ WD
    fesh[d:, :d] = DW @ Gk
    fesh[d:, d:] = DW @ Gk @ WD
    fesh[d:, d:][np.diag_indices(len(D))] += D

    mismatch = float(np.linalg.norm(direct - fesh))
    if mismatch > tol:
        raise FeshbachMismatch(f"direct vs Feshbach resolvent differ by {mismatch:.3e} at k={k:g}")
    return CutoffResolvent(k=k, direct=direct, feshbach=fesh, mismatch=mismatch)


def cutoff_error(sys: AsymptoticSystem, k: float, z: complex) -> float:
    """
    ||(z - Z_k)^{-1} - P_k Q(z) P_k|| on E (+) {|y| <= k}.

    The difference is [1; D W_k] (G_k - G) [1, W_k* D], a rank-dim E product,
    so its norm reduces to a small matrix via QR.
    """
    if z.imag <= 0:
        raise ValueError("cutoff_error needs Im z > 0")
    rows = _cutoff_rows(sys, k)
    Wk, D, Gk = _feshbach_parts(sys, rows, z)
    G = _small_resolvent(sys.Gamma, z)
    d = sys.small_dim
    left = np.vstack([np.eye(d), D[:, None] * Wk])
    right = np.vstack([np.eye(d), (Wk.conj().T * D[None, :]).conj().T])
    _, r_left = scipy.linalg.qr(left, mode="economic")
    _, r_right = scipy.linalg.qr(right, mode="economic")
    return op_norm(r_left @ (Gk - G) @ r_right.conj().T)


def cutoff_convergence_table(sys: AsymptoticSystem, k_values: Sequence[float], z: complex = 1j) -> list[CutoffRow]:
    """Rows (k, error, previous/current ratio) for increasing k."""
    table = []
    previous = None
    for k in sorted(k_values):
        err = cutoff_error(sys, k, z)
        ratio = previous / err if previous is not None and err > 0 else None
        table.append(CutoffRow(k=k, error=err, ratio=ratio))
        previous = err
    return table


def cutoff_action(sys: AsymptoticSystem, k: float, psi: np.ndarray) -> np.ndarray:
    """Z_k psi on E (+) {|y| <= k}."""
    rows = _cutoff_rows(sys, k)
    u, f = sys.split(psi)
    Wk = sys.W[rows]
    return np.concatenate([sys.re_gamma @ u + Wk.conj().T @ f[rows],
                           Wk @ u + sys.reservoir_diagonal[rows] * f[rows]])


def group_via_Zk(sys: AsymptoticSystem, k: float, t: float, psi: np.ndarray,
                 cutoff: Optional[CutoffOperator] = None) -> np.ndarray:
    """e^{-itZ_k} psi (exactly unitary, exactly a group at fixed k)."""
    cutoff = cutoff or build_cutoff(sys, k)
    return cutoff.evolve(t, psi)


# ============================================================================
# Closed-form group U_t
# ============================================================================

def _sector_closed(sector: Sector, gamma_s: np.ndarray, t: float, u_red: np.ndarray,
                   g: np.ndarray, adjoint: bool, chunk_rows: int, theta: float):
    """Cross and double-integral terms of one sector via the eigenbasis of Gamma_e."""
    gam, R = scipy.linalg.eig(gamma_s)
    L = np.linalg.inv(R)
    y = sector.grid.y
    s = sector.sqrt_weights
    nuB = sector.nu @ sector.basis
    sg = s[:, None] * g

    Phi1 = phi1(gam[:, None], y[None, :], t, theta)
    if adjoint:
        Phi1 = Phi1.conj()
        R, L = L.conj().T, R.conj().T
        pref = 1j
    else:
        pref = -1j

    VR = nuB @ R
    Lnu = L @ nuB.conj().T

    # E <- R
    if np.any(g):
        C = Phi1 @ sg
        out_small = pref * (R @ np.sum(Lnu * C, axis=1))
    else:
        out_small = np.zeros(len(u_red), dtype=complex)

    # R <- E
    b = L @ u_red
    out_res = pref * s[:, None] * (Phi1.T @ (b[:, None] * VR.T))

    # R <- E <- R
    for m in range(len(gam) if np.any(g) else 0):
        w = sg @ Lnu[m]
        tmp = np.empty(len(y), dtype=complex)
        for start in range(0, len(y), chunk_rows):
            block = phi2(y[start:start + chunk_rows, None], gam[m], y[None, :], t, theta)
            if adjoint:
                block = block.conj()
            tmp[start:start + chunk_rows] = block @ w
        out_res -= s[:, None] * tmp[:, None] * VR[:, m][None, :]
    return out_small, out_res


def _sector_quadrature(sector: Sector, gamma_s: np.ndarray, t: float, u_red: np.ndarray,
                       g: np.ndarray, adjoint: bool, nodes_per_unit: int, guard: float):
    """Same terms by Gauss-Legendre quadrature in time (defective Gamma_e)."""
    n = max(4, int(math.ceil(nodes_per_unit * t)))
    x, wq = leggauss(n)
    y = sector.grid.y
    s = sector.sqrt_weights
    nuB = sector.nu @ sector.basis
    sg = s[:, None] * g
    sign = 1.0 if adjoint else -1.0
    pref = 1j if adjoint else -1j

    def sem(tau: float) -> np.ndarray:
        m = exp_generator(gamma_s, tau, guard)
        return m.conj().T if adjoint else m

    def phase(tau, values):
        return np.exp(sign * 1j * np.multiply.outer(tau, values))

    tau = 0.5 * t * (x + 1)
    wt = 0.5 * t * wq
    c = phase(tau, y) @ sg

    out_small = np.zeros(len(u_red), dtype=complex)
    coeffs = np.zeros((n, nuB.shape[0]), dtype=complex)
    for q in range(n):
        out_small += wt[q] * (sem(t - tau[q]) @ (nuB.conj().T @ c[q]))
        coeffs[q] = wt[q] * (nuB @ (sem(tau[q]) @ u_red))
    out_res = pref * s[:, None] * (phase(t - tau, y).T @ coeffs)
    out_small = pref * out_small

    # double integral over the simplex tau1 + tau2 <= t
    outer_taus, outer_vecs = [], []
    for q1 in range(n):
        span = t - tau[q1]
        tau2 = 0.5 * span * (x + 1)
        w2 = 0.5 * span * wq
        for q2 in range(n):
            vec = nuB @ (sem(t - tau[q1] - tau2[q2]) @ (nuB.conj().T @ c[q1]))
            outer_taus.append(tau2[q2])
            outer_vecs.append(wt[q1] * w2[q2] * vec)
    out_res -= s[:, None] * (phase(np.array(outer_taus), y).T @ np.array(outer_vecs))
    return out_small, out_res


def group_Ut(
    sys: AsymptoticSystem,
    t: float,
    psi: np.ndarray,
    method: Literal["auto", "eigen", "quadrature"] = "auto",
    defective_cond: float = 1e8,
    nodes_per_unit: int = 40,
    chunk_rows: int = 256,
    theta: float = CONFLUENCE_THRESHOLD,
    guard: float = OVERFLOW_GUARD,
) -> np.ndarray:
    """
    Closed-form renormalized group U_t psi; U_{-t} = U_t*.

    Terms: free reservoir e^{-itZ_R}, semigroup e^{-it Gamma}, the two
    single-integral cross terms (kernel phi1) and the double-integral term
    (kernel phi2), expanded in an eigenbasis of Gamma per sector. When that
    eigenbasis is ill-conditioned the time integrals are done by
    Gauss-Legendre quadrature instead and a DefectiveGenerator warning is issued.

    Args:
        sys: asymptotic system
        t: time (negative t applies the adjoint)
        psi: vector on Z
        method: "auto" chooses by the eigenvector condition number
        theta: confluence switch of the phi1/phi2 kernels
        guard: overflow guard of every e^{-it Gamma} evaluation

    Returns:
        U_t psi
    """
    psi = np.asarray(psi, dtype=complex)
    if t == 0:
        return psi.copy()
    adjoint = t < 0
    t = abs(t)

    d = sys.small_dim
    u, f = sys.split(psi)
    out = np.zeros_like(psi)

    semigroup = exp_generator(sys.Gamma, t, guard)
    out[:d] = (semigroup.conj().T if adjoint else semigroup) @ u
    sign = 1.0 if adjoint else -1.0
    out[d:] = np.exp(sign * 1j * t * sys.reservoir_diagonal) * f

    for sector in sys.sectors:
        if sector.size == 0 or sector.basis.shape[1] == 0:
            continue
        B = sector.basis
        gamma_s = B.conj().T @ sys.Gamma @ B
        u_red = B.conj().T @ u
        g = psi[sector.rows].reshape(sector.grid.size, sector.fiber_dim)

        use_quadrature = method == "quadrature"
        if method == "auto":
            cond = np.linalg.cond(scipy.linalg.eig(gamma_s)[1])
            if not np.isfinite(cond) or cond > defective_cond:
                message = (f"Gamma eigenbasis condition {cond:.2e} > {defective_cond:.0e} "
                           f"in sector e={sector.e:g}; using time quadrature")
                logger.warning(message)
                warnings.warn(message, DefectiveGenerator, stacklevel=2)
                use_quadrature = True

        if use_quadrature:
            small, res = _sector_quadrature(sector, gamma_s, t, u_red, g, adjoint, nodes_per_unit, guard)
        else:
            small, res = _sector_closed(sector, gamma_s, t, u_red, g, adjoint, chunk_rows, theta)
        out[:d] += B @ small
        out[sector.rows] += res.reshape(-1)
    return out


def group_kwargs(config: DilationConfig, linalg: LinalgConfig) -> dict:
    """Keyword arguments of group_Ut taken from the dilation and linalg settings."""
    return {
        "defective_cond": config.defective_cond,
        "nodes_per_unit": config.gl_nodes_per_unit,
        "chunk_rows": linalg.chunk_rows,
        "theta": linalg.confluence_threshold,
        "guard": linalg.overflow_guard,
    }


def dilation_defect(sys: AsymptoticSystem, t: float, **kwargs) -> float:
    """||1_E U_t 1_E - e^{-it Gamma}||."""
    d = sys.small_dim
    cols = []
    for i in range(d):
        psi = np.zeros(sys.dim, dtype=complex)
        psi[i] = 1.0
        cols.append(group_Ut(sys, t, psi, **kwargs)[:d])
    guard = kwargs.get("guard", OVERFLOW_GUARD)
    target = exp_generator(sys.Gamma, t, guard) if t >= 0 else exp_generator(sys.Gamma, -t, guard).conj().T
    return op_norm(np.column_stack(cols) - target)


def unitarity_defect(sys: AsymptoticSystem, t: float, probes: Optional[Sequence[np.ndarray]] = None,
                     **kwargs) -> float:
    """max over probes of | ||U_t psi||^2 - ||psi||^2 | (small-system basis by default)."""
    if probes is None:
        probes = list(np.eye(sys.dim, sys.small_dim, dtype=complex).T)
    worst = 0.0
    for psi in probes:
        out = group_Ut(sys, t, psi, **kwargs)
        worst = max(worst, abs(np.vdot(out, out).real - np.vdot(psi, psi).real))
    return worst


# ============================================================================
# Quadratic forms, domain vectors, minimality, scaling
# ============================================================================

def forms_Zpm(sys: AsymptoticSystem, psi: np.ndarray, psi2: np.ndarray) -> tuple[complex, complex]:
    """<psi|Z^+ psi2> and <psi|Z^- psi2> (Gamma resp. Gamma* on the small system)."""
    u, f = sys.split(psi)
    u2, f2 = sys.split(psi2)
    common = (np.vdot(u, sys.W.conj().T @ f2) + np.vdot(f, sys.W @ u2)
              + np.vdot(f, sys.reservoir_diagonal * f2))
    plus = np.vdot(u, sys.Gamma @ u2) + common
    minus = np.vdot(u, sys.Gamma.conj().T @ u2) + common
    return complex(plus), complex(minus)


def derivative_check(sys: AsymptoticSystem, psi: np.ndarray, psi2: np.ndarray,
                     h: float = 1e-3, **kwargs) -> tuple[float, float]:
    """
    One-sided difference quotients of <psi|U_t psi2> at t = 0 against -i Z^+ (from
    above) and -i Z^- (from below). Returns the two absolute discrepancies.
    """
    plus, minus = forms_Zpm(sys, psi, psi2)
    base = np.vdot(psi, psi2)
    forward = (np.vdot(psi, group_Ut(sys, h, psi2, **kwargs)) - base) / h
    backward = (base - np.vdot(psi, group_Ut(sys, -h, psi2, **kwargs))) / h
    return abs(forward + 1j * plus), abs(backward + 1j * minus)


@dataclass(frozen=True)
class DomainVector:
    psi: np.ndarray
    Zpsi: np.ndarray
    residual: float


def domain_vector(sys: AsymptoticSystem, u: np.ndarray, g: np.ndarray, z0: complex = 1j) -> DomainVector:
    """
    psi = (u, (z0 - Z_R)^{-1} W u + g), Z psi = (Gamma u + W* g, z0 (z0 - Z_R)^{-1} W u + Z_R g).

    residual = ||Q(z0)(z0 psi - Z psi) - psi||.
    """
    if z0.imag <= 0:
        raise ValueError("domain_vector needs Im z0 > 0")
    u = np.asarray(u, dtype=complex)
    g = np.asarray(g, dtype=complex)
    D0 = 1.0 / (z0 - sys.reservoir_diagonal)
    Wu = sys.W @ u
    psi = np.concatenate([u, D0 * Wu + g])
    zpsi = np.concatenate([sys.Gamma @ u + sys.W.conj().T @ g,
                           z0 * D0 * Wu + sys.reservoir_diagonal * g])
    back = apply_Q(sys, z0, z0 * psi - zpsi)
    return DomainVector(psi=psi, Zpsi=zpsi, residual=float(np.linalg.norm(back - psi)))


def minimality(sys: AsymptoticSystem, rank_tol: float = 1e-10) -> MinimalityReport:
    """Minimal iff the numerical rank of nu equals dim h."""
    nu = sys.nu
    fiber_dim = nu.shape[0]
    sv = scipy.linalg.svdvals(nu) if nu.size else np.empty(0)
    rank = int(np.sum(sv > rank_tol * sv.max())) if sv.size and sv.max() > 0 else 0
    return MinimalityReport(minimal=rank == fiber_dim, rank=rank, fiber_dim=fiber_dim,
                            singular_values=[float(x) for x in sv])


def scaling_check(sys: AsymptoticSystem, lam: float, z: complex = 1j) -> float:
    """
    Scaling invariance of Z: assemble [[lam^2 Re Gamma, lam W*], [lam W, Z_R]]
    on the physical sub-grid lam^2 Y (every m-th node, weights lam^2 dy), apply
    lam^{-2} and the identification of sub-grid node i with node i of Y, and
    compare its resolvent at z with that of Z_k at k = K / lam^2. Returns the
    Frobenius norm of the difference (an upper bound on the operator norm).

    Raises:
        GridIncompatible: If lam^2 is not a positive integer or a grid is not uniform
    """
    lam2 = lam * lam
    m = int(round(lam2))
    if m < 1 or abs(lam2 - m) > 1e-9 * max(1.0, lam2):
        raise GridIncompatible(f"lambda^2 = {lam2:.12g} does not map the grid into itself")

    d = sys.small_dim
    sectors = []
    offset = d
    k = None
    for sector in sys.sectors:
        grid = sector.grid
        if not grid.is_uniform:
            raise GridIncompatible(f"sector e={sector.e:g} grid is not uniform")
        n = (grid.size - 1) // 2
        i = np.arange(-(n // m), n // m + 1)
        physical = AsymptoticGrid(y=grid.y[m * i + n], u=np.full(len(i), lam2 * grid.dy), dy=lam2 * grid.dy)
        sectors.append(Sector(e=sector.e, grid=physical, nu=sector.nu, projection=sector.projection, offset=offset))
        offset += physical.size * sector.fiber_dim
        k = (n // m) * grid.dy if k is None else min(k, (n // m) * grid.dy)

    scaled_sys = AsymptoticSystem(small=sys.small, Gamma=sys.Gamma, sectors=tuple(sectors))
    extent = max(s.grid.extent for s in sectors)
    conj = build_cutoff(scaled_sys, extent).Zk.copy()
    conj[:d, :d] *= lam2
    conj[d:, :d] *= lam
    conj[:d, d:] *= lam
    conj /= lam2

    cutoff = build_cutoff(sys, k * (1 + 1e-12))
    if cutoff.Zk.shape != conj.shape:
        raise GridIncompatible("sub-grid and cutoff grid differ in size")
    if np.array_equal(conj, cutoff.Zk):
        return 0.0
    eye = np.eye(conj.shape[0], dtype=complex)
    return float(np.linalg.norm(resolve(conj, z, eye) - resolve(cutoff.Zk, z, eye)))


def gaussian_packet(sys: AsymptoticSystem, width: float, e: Optional[float] = None) -> np.ndarray:
    """Unit Gaussian of the given width in the first fiber row of sector e."""
    sector = sys.sector(sys.small.eigenvalue(e))
    v = np.zeros(sys.dim, dtype=complex)
    if sector.fiber_dim == 0:
        return v
    y = sector.grid.y
    v[sector.offset + np.arange(len(y)) * sector.fiber_dim] = sector.sqrt_weights * np.exp(-0.5 * (y / width) ** 2)
    return v / np.linalg.norm(v)


# ============================================================================
# Diagnostics report
# ============================================================================

def run_diagnostics(
    davies: DaviesGenerator,
    config: Optional[DilationConfig] = None,
    policy: Optional[GridPolicy] = None,
    model_name: str = "model",
    z: complex = 1j,
    linalg: Optional[LinalgConfig] = None,
) -> DilationReport:
    """
    Build the asymptotic system and run every dilation check.

    Identity residuals with a pass threshold go into `identities`; convergence
    quantities that only shrink under refinement go into `diagnostics`.
    """
    config = config or DilationConfig()
    policy = policy or GridPolicy()
    linalg = linalg or LinalgConfig()
    sys = build_system(davies, AsymptoticGrid.from_policy(policy), condition_tol=config.condition_tol)
    extent = max(s.grid.extent for s in sys.sectors)
    k_values = sorted(k for k in config.k_values if k <= extent * (1 + 1e-12))
    group = group_kwargs(config, linalg)
    identities: list[IdentityCheck] = []
    diagnostics: dict[str, float] = {}
    failures: list[str] = []

    def check(name: str, fn, tol: float):
        try:
            identities.append(IdentityCheck(name=name, residual=float(fn()), tolerance=tol))
        except FriedrichsError as e:
            failures.append(f"{name}: {type(e).__name__}: {e}")

    small_probe = np.zeros(sys.dim, dtype=complex)
    small_probe[0] = 1.0
    probes = [small_probe]
    packet = gaussian_packet(sys, 1.0)
    if np.any(packet):
        probes.append(packet)

    table: list[CutoffRow] = []
    try:
        table = cutoff_convergence_table(sys, k_values, z)
    except FriedrichsError as e:
        failures.append(f"cutoff table: {type(e).__name__}: {e}")

    times = list(config.times)
    for t in times:
        check(f"dilation t={t:g}", lambda t=t: dilation_defect(sys, t, **group), 1e-12)
        try:
            diagnostics[f"unitarity_defect t={t:g}"] = unitarity_defect(sys, t, probes, **group)
        except FriedrichsError as e:
            failures.append(f"unitarity t={t:g}: {type(e).__name__}: {e}")

    if k_values:
        k0 = k_values[0]
        check(f"feshbach k={k0:g}", lambda: resolvent_Zk(sys, k0, z, config.feshbach_tol).mismatch,
              config.feshbach_tol)
        cutoff = build_cutoff(sys, k0)
        check(f"cutoff unitarity k={k0:g}", lambda: max(
            abs(np.linalg.norm(cutoff.evolve(t, p)) - np.linalg.norm(p)) for t in times for p in probes
        ), config.identity_tol)
        if len(times) >= 2:
            t, s = times[0], times[1]
            check(f"cutoff group law k={k0:g}", lambda: max(
                np.linalg.norm(cutoff.evolve(t, cutoff.evolve(s, p)) - cutoff.evolve(t + s, p)) for p in probes
            ), config.identity_tol)
        target = exp_generator(sys.Gamma, 1.0, linalg.overflow_guard)
        d = sys.small_dim
        for k in k_values[:2]:
            cut = build_cutoff(sys, k)
            compressed = cut.eig.compress(np.exp(-1j * cut.eig.eigenvalues), np.arange(d))
            diagnostics[f"compression k={k:g}"] = op_norm(compressed - target)

    for i, p in enumerate(probes):
        for j, q in enumerate(probes):
            if j < i:
                continue
            pair = f"({i},{j})"
            try:
                above, below = derivative_check(sys, p, q, h=config.fd_step, **group)
            except FriedrichsError as e:
                failures.append(f"derivative {pair}: {type(e).__name__}: {e}")
                continue
            identities.append(IdentityCheck(name=f"derivative Z+ {pair}", residual=above, tolerance=config.fd_tol))
            identities.append(IdentityCheck(name=f"derivative Z- {pair}", residual=below, tolerance=config.fd_tol))

    u = np.ones(sys.small_dim, dtype=complex) / math.sqrt(sys.small_dim)
    plus, minus = forms_Zpm(sys, np.concatenate([u, np.zeros(sys.dim - sys.small_dim)]),
                            np.concatenate([u, np.zeros(sys.dim - sys.small_dim)]))
    expected = -2j * math.pi * np.vdot(u, sys.nu.conj().T @ (sys.nu @ u))
    identities.append(IdentityCheck(name="Z+ - Z- asymmetry", residual=abs(plus - minus - expected),
                                    tolerance=config.condition_tol))

    g = packet[sys.small_dim:]
    check("domain vector", lambda: domain_vector(sys, u, g, z).residual, config.identity_tol)
    dv = domain_vector(sys, u, g, z)
    idx_small = np.arange(sys.small_dim)
    for k in k_values:
        rows = _cutoff_rows(sys, k)
        restricted = dv.Zpsi[np.concatenate([idx_small, sys.small_dim + rows])]
        diagnostics[f"domain cutoff k={k:g}"] = float(np.linalg.norm(cutoff_action(sys, k, dv.psi) - restricted))

    for lam in config.scaling_lambdas:
        check(f"scaling lambda={lam:g}", lambda lam=lam: scaling_check(sys, lam, z), config.identity_tol)

    report = DilationReport(
        model=model_name,
        cutoff_table=table,
        identities=identities,
        minimality=minimality(sys, config.rank_tol),
        diagnostics=diagnostics,
        failures=failures + [c.name for c in identities if not c.passed],
    )
    logger.info(f"Dilation diagnostics: {len(identities)} checks, {len(report.failures)} failure(s)")
    return report
