"""
Dense complex linear-algebra kernels.

Hermitian eigendecomposition, propagators, resolvents, the non-normal
exponential e^{-itG}, and the oscillatory simplex integrals phi1/phi2 used by
the closed-form dilation group. All functions are pure.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotHermitian, OverflowGuard, Singular

logger = logging.getLogger(__name__)

CONFLUENCE_THRESHOLD = 1e-4
HERMITIAN_TOL = 1e-12
OVERFLOW_GUARD = 1e6
SINGULAR_PIVOT = 1e-14


def op_norm(matrix: np.ndarray) -> float:
    """Operator 2-norm from singular values (vector 2-norm for 1-D input)."""
    arr = np.asarray(matrix)
    if arr.size == 0:
        return 0.0
    if arr.ndim == 1:
        return float(np.linalg.norm(arr))
    return float(scipy.linalg.svdvals(arr)[0])


def check_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    """Raise NotHermitian unless ||M - M*||_F <= tol * ||M||_F."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotHermitian(f"Matrix of shape {m.shape} is not square")
    asym = np.linalg.norm(m - m.conj().T)
    scale = np.linalg.norm(m)
    if asym > tol * scale:
        raise NotHermitian(f"||M - M*||_F = {asym:.3e} exceeds {tol:.1e} * ||M||_F = {tol * scale:.3e}")


@dataclass(frozen=True)
class HermitianEig:
    """Eigendecomposition M = V diag(w) V* with ascending w and unitary V."""

    eigenvalues: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def _vectors_h(self) -> np.ndarray:
        return self.vectors.conj().T

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.eigenvalues) @ self._vectors_h

    def apply(self, values: np.ndarray, x: np.ndarray, rows=None) -> np.ndarray:
        """
        Return f(M) x for a function given by its values on the spectrum.

        Args:
            values: f(eigenvalues), shape (dim,)
            x: vector or matrix with dim rows
            rows: optional row selection of the result
        """
        left = self.vectors if rows is None else self.vectors[rows]
        coeffs = self._vectors_h @ x
        if coeffs.ndim == 1:
            return left @ (values * coeffs)
        return left @ (values[:, None] * coeffs)

    def evolve(self, t: float, x: np.ndarray, scale: float = 1.0, shift: float = 0.0) -> np.ndarray:
        """e^{-it (M - shift)/scale} x."""
        return self.apply(np.exp(-1j * t * (self.eigenvalues - shift) / scale), x)

    def compress(self, values: np.ndarray, rows) -> np.ndarray:
        """Block P f(M) P* for a row selection P."""
        sub = self.vectors[rows]
        return (sub * values) @ sub.conj().T


def hermitian_eig(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> HermitianEig:
    """
    Eigendecomposition of a Hermitian matrix.

    Args:
        matrix: square Hermitian matrix
        tol: relative symmetry tolerance

    Returns:
        HermitianEig with ascending eigenvalues

    Raises:
        NotHermitian: If the symmetry check fails
        NoConvergence: If LAPACK does not converge
    """
    m = np.asarray(matrix, dtype=complex)
    check_hermitian(m, tol)
    try:
        w, v = scipy.linalg.eigh(m, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise NoConvergence(str(e)) from e
    return HermitianEig(eigenvalues=w, vectors=v)


def propagate(matrix: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
    """Return e^{-itM} x for Hermitian M."""
    return hermitian_eig(matrix).evolve(t, np.asarray(x, dtype=complex))


def resolve(matrix: np.ndarray, z: complex, b: np.ndarray) -> np.ndarray:
    """
    Solve (zI - M) X = B by LU factorisation.

    Raises:
        Singular: If a pivot is negligible relative to the largest one
    """
    m = np.asarray(matrix, dtype=complex)
    shifted = z * np.eye(m.shape[0], dtype=complex) - m
    lu, piv = scipy.linalg.lu_factor(shifted, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() <= SINGULAR_PIVOT * max(pivots.max(), 1.0):
        raise Singular(f"zI - M is singular at z = {z} (min pivot {pivots.min():.2e})")
    return scipy.linalg.lu_solve((lu, piv), np.asarray(b, dtype=complex))


def exp_generator(generator: np.ndarray, t: float, guard: float = OVERFLOW_GUARD) -> np.ndarray:
    """
    Return e^{-itG} for a (possibly non-normal) square G and t >= 0.

    Raises:
        ValueError: If t < 0
        OverflowGuard: If t * ||G|| exceeds the guard
    """
    if t < 0:
        raise ValueError(f"exp_generator requires t >= 0, got {t}")
    g = np.asarray(generator, dtype=complex)
    if g.size == 0:
        return g.copy()
    if t * np.linalg.norm(g, 2) > guard:
        raise OverflowGuard(f"t*||G|| = {t * np.linalg.norm(g, 2):.3e} exceeds {guard:.1e}")
    return scipy.linalg.expm(-1j * t * g)


# ============================================================================
# Oscillatory simplex kernels
# ============================================================================

def phi1(a, b, t: float, theta: float = CONFLUENCE_THRESHOLD):
    """
    phi1(a, b; t) = int_0^t e^{-i(t-u)a} e^{-iub} du, elementwise with broadcasting.

    Closed form (e^{-ibt} - e^{-iat}) / (i(a-b)); confluent series about the
    midpoint when |a-b| t < theta.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    diff = a - b
    small = np.abs(diff) * t < theta

    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (np.exp(-1j * b * t) - np.exp(-1j * a * t)) / (1j * diff)

    half = 0.5 * diff
    x2 = (half * t) ** 2
    series = np.exp(-0.5j * (a + b) * t) * t * (1.0 - x2 / 6.0 + x2 ** 2 / 120.0 - x2 ** 3 / 5040.0)

    out = np.where(small, series, exact)
    return out[()] if out.ndim == 0 else out


def _homogeneous(d0, d1, d2, order: int) -> list:
    """Complete homogeneous symmetric polynomials h_0..h_order of three variables."""
    h = [np.ones_like(d0)]
    for _ in range(order):
        h.append(h[-1] * d0)
    for d in (d1, d2):
        for m in range(1, order + 1):
            h[m] = h[m] + d * h[m - 1]
    return h


def phi2(a, b, c, t: float, theta: float = CONFLUENCE_THRESHOLD):
    """
    phi2(a, b, c; t): the simplex integral

        int_{u1,u2 >= 0, u1+u2 <= t} e^{-iu2 a} e^{-i(t-u1-u2) b} e^{-iu1 c} du1 du2,

    equal to minus the second divided difference of x -> e^{-ixt} at (a, b, c).
    Symmetric in all three arguments. Elementwise with broadcasting.
    """
    a, b, c = np.broadcast_arrays(
        np.asarray(a, dtype=complex), np.asarray(b, dtype=complex), np.asarray(c, dtype=complex)
    )
    dab, dbc, dac = np.abs(a - b), np.abs(b - c), np.abs(a - c)

    # order (p, q, r) so that p and r are the most separated pair
    use_ac = (dac >= dab) & (dac >= dbc)
    use_ab = ~use_ac & (dab >= dbc)
    p = np.where(use_ac, a, np.where(use_ab, a, b))
    q = np.where(use_ac, b, np.where(use_ab, c, a))
    r = np.where(use_ac, c, np.where(use_ab, b, c))
    spread = np.maximum(np.maximum(dab, dbc), dac)
    small = spread * t < theta

    g_pq = -1j * phi1(p, q, t, theta)
    g_qr = -1j * phi1(q, r, t, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        divided = (g_pq - g_qr) / (p - r)

    centre = (a + b + c) / 3.0
    d0, d1, d2 = a - centre, b - centre, c - centre
    order = 6
    h = _homogeneous(d0, d1, d2, order)
    taylor = np.zeros_like(centre)
    factor = 1.0 + 0j
    for n in range(1, order + 3):
        factor = factor * (-1j * t) / n
        if n >= 2:
            taylor = taylor + factor * h[n - 2]
    taylor = np.exp(-1j * centre * t) * taylor

    out = -np.where(small, taylor, divided)
    return out[()] if out.ndim == 0 else out
