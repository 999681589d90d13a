"""
Continuum Friedrichs model, assumption checks, lambda-adapted grids and assembly
of the discretized Hamiltonian H_lambda = [[E, lambda V], [lambda V*, H_R]].
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .config import GridPolicy
from .errors import AssumptionViolated, DimensionMismatch, GridConflict
from .schemas import AssumptionCheck, ValidationReport

logger = logging.getLogger(__name__)


# ============================================================================
# Continuum description
# ============================================================================

@dataclass(frozen=True)
class Cell:
    """Half-open interval [lower, upper) with a fiber dimension (None = infinite)."""

    lower: float
    upper: float
    fiber_dim: Optional[int]

    def contains(self, x: float) -> bool:
        return self.lower <= x < self.upper

    def interior(self, x: float) -> bool:
        return self.lower < x < self.upper


@dataclass(frozen=True)
class SpectralPartition:
    """Partition of the real line into cells, plus the truncation window."""

    cells: tuple[Cell, ...]
    window: tuple[float, float]

    @property
    def boundaries(self) -> np.ndarray:
        """Finite interior cell boundaries, ascending."""
        edges = sorted({c.lower for c in self.cells} | {c.upper for c in self.cells})
        return np.array([x for x in edges if math.isfinite(x)])

    def cell_index(self, x) -> np.ndarray:
        """Index of the cell containing each x (-1 if none)."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.full(xs.shape, -1, dtype=int)
        for i, cell in enumerate(self.cells):
            out[(xs >= cell.lower) & (xs < cell.upper)] = i
        return out

    def fiber_dims(self, x) -> np.ndarray:
        idx = self.cell_index(x)
        if np.any(idx < 0):
            raise DimensionMismatch("Point outside every cell of the partition")
        return np.array([self.cells[i].fiber_dim for i in idx], dtype=int)

    def cells_in_window(self) -> list[int]:
        lo, hi = self.window
        return [i for i, c in enumerate(self.cells) if c.upper > lo and c.lower < hi]


@dataclass(frozen=True)
class CouplingFunction:
    """
    Coupling v(x): fiber_dim(x) x dim E matrices, evaluated cell by cell.

    `func(xs, cell)` receives points inside one cell and returns an array of
    shape (len(xs), fiber_dim, dim_e).
    """

    func: Callable[[np.ndarray, int], np.ndarray]
    holder_delta: float
    bound: float
    label: str = "custom"

    def evaluate_cell(self, xs: np.ndarray, cell: int) -> np.ndarray:
        return np.asarray(self.func(np.asarray(xs, dtype=float), cell), dtype=complex)

    def evaluate(self, x: float, partition: SpectralPartition) -> np.ndarray:
        """v(x) as a single matrix."""
        cell = int(partition.cell_index(x)[0])
        return self.evaluate_cell(np.array([x]), cell)[0]

    def gram(self, xs, partition: SpectralPartition) -> np.ndarray:
        """v*(x) v(x) for each x, shape (n, dim_e, dim_e)."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        cells = partition.cell_index(xs)
        out = None
        for cell in np.unique(cells):
            mask = cells == cell
            vals = self.evaluate_cell(xs[mask], int(cell))
            block = np.einsum("nfi,nfj->nij", vals.conj(), vals)
            if out is None:
                out = np.zeros((len(xs),) + block.shape[1:], dtype=complex)
            out[mask] = block
        return out

    def norms(self, xs, partition: SpectralPartition) -> np.ndarray:
        """Operator norm ||v(x)|| at each x."""
        g = self.gram(xs, partition)
        return np.sqrt(np.maximum(np.linalg.eigvalsh(g)[:, -1], 0.0))


@dataclass(frozen=True)
class SmallSystem:
    """Hermitian E with its distinct eigenvalues and spectral projections."""

    E: np.ndarray
    eigenvalues: tuple[float, ...]
    projections: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.E.shape[0]

    def projection(self, e: float) -> np.ndarray:
        return self.projections[self.sector_index(e)]

    def sector_index(self, e: float) -> int:
        for i, ev in enumerate(self.eigenvalues):
            if abs(ev - e) <= 1e-9 * max(1.0, abs(ev)):
                return i
        raise KeyError(f"{e} is not an eigenvalue of E")

    def eigenvalue(self, e: Optional[float] = None) -> float:
        """Canonical eigenvalue closest to e (lowest if e is None)."""
        if e is None:
            return self.eigenvalues[0]
        return self.eigenvalues[self.sector_index(e)]

    def phase(self, s: float) -> np.ndarray:
        """e^{isE} built from the same eigenvalues used for grids."""
        out = np.zeros_like(self.E)
        for e, p in zip(self.eigenvalues, self.projections):
            out = out + np.exp(1j * s * e) * p
        return out

    @classmethod
    def from_matrix(cls, E, group_tol: float = 1e-10) -> "SmallSystem":
        """
        Build from a matrix, Hermitianizing first.

        Diagonal E gets exact eigenvalues and 0/1 projections; otherwise
        eigenvalues within group_tol * max(1, ||E||) are merged.
        """
        e_mat = np.atleast_2d(np.asarray(E, dtype=complex))
        e_mat = (e_mat + e_mat.conj().T) / 2
        n = e_mat.shape[0]

        if np.count_nonzero(e_mat - np.diag(np.diag(e_mat))) == 0:
            diag = np.real(np.diag(e_mat))
            values = tuple(float(v) for v in np.unique(diag))
            projections = tuple(np.diag((diag == v).astype(complex)) for v in values)
            return cls(E=e_mat, eigenvalues=values, projections=projections)

        w, v = np.linalg.eigh(e_mat)
        tol = group_tol * max(1.0, float(np.abs(w).max()))
        groups: list[list[int]] = []
        for i in range(n):
            if groups and w[i] - w[groups[-1][-1]] <= tol:
                groups[-1].append(i)
            else:
                groups.append([i])
        values = tuple(float(np.mean(w[g])) for g in groups)
        projections = tuple(v[:, g] @ v[:, g].conj().T for g in groups)
        return cls(E=e_mat, eigenvalues=values, projections=projections)


@dataclass(frozen=True)
class FriedrichsModel:
    """Small system, reservoir partition, coupling and the neighbourhoods I~_e."""

    name: str
    small: SmallSystem
    partition: SpectralPartition
    coupling: CouplingFunction
    neighborhoods: dict[float, tuple[float, float]] = field(default_factory=dict)

    @property
    def dim_e(self) -> int:
        return self.small.dim

    def neighborhood(self, e: float) -> tuple[float, float]:
        if e in self.neighborhoods:
            return self.neighborhoods[e]
        return default_neighborhoods(self.small, self.partition)[e]

    def radius(self, e: float) -> float:
        lo, hi = self.neighborhood(e)
        return max(0.0, min(e - lo, hi - e))

    def fiber_dim_at(self, e: float) -> int:
        return int(self.partition.fiber_dims([e])[0])


def default_neighborhoods(small: SmallSystem, partition: SpectralPartition) -> dict[float, tuple[float, float]]:
    """
    Symmetric I~_e at half the distance to the nearest other eigenvalue or cell
    boundary, capped by half the distance to the window edge.
    """
    lo_w, hi_w = partition.window
    boundaries = partition.boundaries
    out = {}
    for e in small.eigenvalues:
        distances = [abs(e - other) for other in small.eigenvalues if other != e]
        distances.extend(abs(e - b) for b in boundaries)
        radius = 0.5 * min(distances) if distances else math.inf
        radius = min(radius, 0.5 * max(0.0, min(e - lo_w, hi_w - e)))
        out[e] = (e - radius, e + radius)
    return out


# ============================================================================
# Assumption checks
# ============================================================================

def _check_a1(model: FriedrichsModel, samples: int, tol: float) -> list[AssumptionCheck]:
    checks = []
    cells = sorted(model.partition.cells, key=lambda c: c.lower)

    covered = (
        cells[0].lower == -math.inf
        and cells[-1].upper == math.inf
        and all(a.upper == b.lower for a, b in zip(cells, cells[1:]))
        and all(c.lower < c.upper for c in cells)
    )
    checks.append(AssumptionCheck(
        assumption="A1", subject="partition",
        passed=covered,
        detail="cells disjoint and cover R" if covered else "cells do not tile the real line",
    ))

    finite = all(
        model.partition.cells[i].fiber_dim is not None
        for i in model.partition.cells_in_window()
    )
    checks.append(AssumptionCheck(
        assumption="A1", subject="fibers",
        passed=finite,
        detail="finite fibers in window" if finite else "infinite-dimensional fiber inside the window",
    ))
    if not (covered and finite):
        return checks

    lo, hi = model.partition.window
    mismatch = []
    for i in model.partition.cells_in_window():
        cell = model.partition.cells[i]
        a, b = max(cell.lower, lo), min(cell.upper, hi)
        vals = model.coupling.evaluate_cell(np.array([0.5 * (a + b)]), i)
        if vals.shape[1:] != (cell.fiber_dim, model.dim_e):
            mismatch.append(f"cell {i}: got {vals.shape[1:]}, expected {(cell.fiber_dim, model.dim_e)}")
    checks.append(AssumptionCheck(
        assumption="A1", subject="coupling shape",
        passed=not mismatch,
        detail="; ".join(mismatch) or "coupling rows match fiber dimensions",
    ))
    if mismatch:
        return checks

    xs = np.linspace(lo, hi, samples)
    xs = np.concatenate([xs, np.array(model.small.eigenvalues)])
    sup = float(model.coupling.norms(xs, model.partition).max())
    bounded = sup <= model.coupling.bound * (1 + tol)
    checks.append(AssumptionCheck(
        assumption="A1", subject="bound",
        passed=bounded,
        value=sup,
        detail=f"sup ||v|| = {sup:.6g} vs bound {model.coupling.bound:.6g}",
    ))
    return checks


def _check_a2(model: FriedrichsModel) -> list[AssumptionCheck]:
    checks = []
    part = model.partition
    intervals = []
    for e in model.small.eigenvalues:
        idx = int(part.cell_index([e])[0])
        cell = part.cells[idx]
        inside = cell.interior(e)
        checks.append(AssumptionCheck(
            assumption="A2", subject=f"e={e:g}",
            passed=inside,
            detail=f"interior of cell [{cell.lower:g}, {cell.upper:g})" if inside
            else f"e lies on the boundary of cell [{cell.lower:g}, {cell.upper:g})",
        ))
        lo, hi = model.neighborhood(e)
        ok = (
            lo < e < hi
            and lo >= cell.lower and hi <= cell.upper
            and lo >= part.window[0] and hi <= part.window[1]
        )
        checks.append(AssumptionCheck(
            assumption="A2", subject=f"I~_e={e:g}",
            passed=ok,
            detail=f"({lo:g}, {hi:g}) inside its cell and the window" if ok
            else f"({lo:g}, {hi:g}) is empty or leaves its cell or the window",
        ))
        intervals.append((lo, hi))

    intervals.sort()
    disjoint = all(a[1] <= b[0] for a, b in zip(intervals, intervals[1:]))
    checks.append(AssumptionCheck(
        assumption="A2", subject="disjointness",
        passed=disjoint,
        detail="neighbourhoods pairwise disjoint" if disjoint else "neighbourhoods overlap",
    ))
    return checks


def _check_a3(model: FriedrichsModel, samples: int, holder_ratio: float) -> tuple[list[AssumptionCheck], dict]:
    checks = []
    constants = {}
    delta = model.coupling.holder_delta
    decades = 6
    for e in model.small.eigenvalues:
        r_max = min(1.0, model.radius(e)) if model.radius(e) > 0 else 1e-3
        dist = np.geomspace(r_max, r_max * 10.0 ** (-decades), samples // 2)
        xs = np.concatenate([e + dist, e - dist])
        base = model.coupling.gram([e], model.partition)[0]
        diffs = model.coupling.gram(xs, model.partition) - base
        inc = np.linalg.norm(diffs, ord=2, axis=(1, 2))
        r = np.concatenate([dist, dist])
        quotient = inc / r ** delta
        c_hat = float(quotient.max())
        constants[f"{e:g}"] = c_hat

        decade = np.floor(np.log10(r_max / r) + 1e-9).clip(0, decades - 1)
        coarse = quotient[decade == 0].max()
        fine = quotient[decade == decades - 1].max()
        scale = max(1.0, float(np.abs(base).max()))
        negligible = inc.max() <= 1e-13 * scale

        inc_coarse = inc[decade == 0].max()
        inc_fine = inc[decade == decades - 1].max()
        if negligible or inc_fine <= 1e-13 * scale:
            ok, slope = True, math.inf
        else:
            slope = math.log10(max(inc_coarse, 1e-300) / inc_fine) / (decades - 1)
            ok = fine <= holder_ratio * max(coarse, 1e-300) and slope >= 0.5 * delta

        checks.append(AssumptionCheck(
            assumption="A3", subject=f"e={e:g}",
            passed=ok,
            value=c_hat,
            detail=f"Hoelder constant {c_hat:.4g} (delta={delta}), local exponent {slope:.3g}",
        ))
    return checks, constants


def check_assumptions(
    model: FriedrichsModel,
    samples: int = 400,
    tol: float = 1e-6,
    holder_ratio: float = 100.0,
) -> ValidationReport:
    """
    Evaluate A1-A3 numerically and return a report without raising.

    Args:
        model: model to check
        samples: number of sample points per check (>= 100)
        tol: relative slack on the coupling bound
        holder_ratio: allowed growth of the Hoelder quotient across decades

    Returns:
        ValidationReport
    """
    if samples < 100:
        raise ValueError(f"samples must be >= 100, got {samples}")

    checks = _check_a1(model, samples, tol)
    constants: dict = {}
    if all(c.passed for c in checks):
        checks.extend(_check_a2(model))
        if all(c.passed for c in checks if c.subject.startswith("e=")):
            a3, constants = _check_a3(model, samples, holder_ratio)
            checks.extend(a3)
    return ValidationReport(model=model.name, checks=checks, holder_constants=constants)


def validate_assumptions(model: FriedrichsModel, samples: int = 400, tol: float = 1e-6,
                         holder_ratio: float = 100.0) -> ValidationReport:
    """Like check_assumptions, but raise AssumptionViolated at the first failure (A1, A2, A3 order)."""
    report = check_assumptions(model, samples, tol, holder_ratio)
    for check in sorted(report.checks, key=lambda c: c.assumption):
        if not check.passed:
            raise AssumptionViolated(check.assumption, f"{check.subject}: {check.detail}")
    return report


# ============================================================================
# Grids
# ============================================================================

@dataclass(frozen=True)
class AsymptoticGrid:
    """Uniform grid y_j = j dy, |j| <= n, with weights u_j = dy."""

    y: np.ndarray
    u: np.ndarray
    dy: float

    @classmethod
    def uniform(cls, dy: float, extent: float) -> "AsymptoticGrid":
        n = int(round(extent / dy))
        j = np.arange(-n, n + 1)
        return cls(y=j * dy, u=np.full(len(j), dy), dy=dy)

    @classmethod
    def from_policy(cls, policy: GridPolicy) -> "AsymptoticGrid":
        return cls.uniform(policy.dy, policy.extent)

    @property
    def size(self) -> int:
        return len(self.y)

    @property
    def extent(self) -> float:
        return float(np.abs(self.y).max())

    @property
    def is_uniform(self) -> bool:
        n = (self.size - 1) // 2
        return bool(np.all(self.u == self.dy) and np.all(self.y == np.arange(-n, n + 1) * self.dy))

    def mask(self, k: float) -> np.ndarray:
        return np.abs(self.y) <= k

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(np.ascontiguousarray(self.u).tobytes())
        return h.hexdigest()[:16]


BACKGROUND = -1

# neighbourhoods keep this many max|e| away from the window edges
WINDOW_MARGIN = 10.0


@dataclass(frozen=True)
class ReservoirGrid:
    """
    Physical quadrature grid. Nodes tagged Scaled(e, j) satisfy x = e + lambda^2 y_j
    with weight lambda^2 u_j; all others are Background (sector = -1).
    """

    lam: float
    nodes: np.ndarray
    weights: np.ndarray
    fiber_dims: np.ndarray
    cells: np.ndarray
    sector: np.ndarray
    asym_index: np.ndarray
    eigenvalues: tuple[float, ...]
    asymptotic_key: str

    @property
    def offsets(self) -> np.ndarray:
        """First reservoir row of each node."""
        return np.concatenate([[0], np.cumsum(self.fiber_dims)[:-1]]).astype(int)

    @property
    def size(self) -> int:
        return int(self.fiber_dims.sum())

    def origin_tag(self, i: int) -> tuple:
        if self.sector[i] == BACKGROUND:
            return ("Background",)
        return ("Scaled", self.eigenvalues[self.sector[i]], int(self.asym_index[i]))

    def scaled_nodes(self, sector: int) -> np.ndarray:
        return np.flatnonzero(self.sector == sector)

    def spacing_near(self, x: float) -> float:
        """Width of the quadrature cell closest to x."""
        return float(self.weights[np.argmin(np.abs(self.nodes - x))])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.nodes, self.weights, self.fiber_dims):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def _background(a: float, b: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    length = b - a
    if length <= 1e-12 * max(1.0, abs(a), abs(b)):
        return np.empty(0), np.empty(0)
    n = max(1, int(math.ceil(length / h - 1e-9)))
    w = length / n
    return a + (np.arange(n) + 0.5) * w, np.full(n, w)


def build_grid(model: FriedrichsModel, lam: float, policy: GridPolicy,
               asym: Optional[AsymptoticGrid] = None) -> ReservoirGrid:
    """
    Build the lambda-adapted reservoir grid.

    Scaled nodes e + lambda^2 y_j (weights lambda^2 u_j) fill I~_e; background
    midpoint nodes fill the rest of the window, split at cell boundaries.

    Args:
        model: Friedrichs model
        lam: coupling lambda > 0
        policy: grid policy (asymptotic grid, background spacing, strictness)
        asym: asymptotic grid; built from the policy if omitted

    Returns:
        ReservoirGrid

    Raises:
        GridConflict: If a neighbourhood leaves the window or comes within
            WINDOW_MARGIN max|e| of its edge, a cell in the window has an
            infinite fiber, scaled zones collide, or (strict mode) lambda^2 K
            exceeds a neighbourhood radius
    """
    if lam <= 0:
        raise ValueError(f"build_grid requires lambda > 0, got {lam}")
    asym = asym or AsymptoticGrid.from_policy(policy)
    lo_w, hi_w = model.partition.window
    lam2 = lam * lam

    infinite = [i for i in model.partition.cells_in_window() if model.partition.cells[i].fiber_dim is None]
    if infinite:
        raise GridConflict(f"cells {infinite} inside the window have infinite fiber dimension")

    margin = WINDOW_MARGIN * max(abs(e) for e in model.small.eigenvalues)
    parts_x, parts_w, parts_s, parts_j = [], [], [], []
    zones = []
    for s, e in enumerate(model.small.eigenvalues):
        lo, hi = model.neighborhood(e)
        if lo < lo_w or hi > hi_w:
            raise GridConflict(f"I~_e = ({lo:g}, {hi:g}) for e={e:g} leaves the window")
        if min(lo - lo_w, hi_w - hi) < margin:
            raise GridConflict(
                f"I~_e = ({lo:g}, {hi:g}) for e={e:g} is closer than {margin:g} "
                f"({WINDOW_MARGIN:g} max|e|) to the window edge"
            )
        x = e + lam2 * asym.y
        keep = (x > lo) & (x < hi)
        if policy.strict_extent and not keep.all():
            raise GridConflict(
                f"lambda^2 K = {lam2 * asym.extent:g} exceeds radius {model.radius(e):g} of I~_e at e={e:g}"
            )
        if not keep.any():
            continue
        half = 0.5 * lam2 * asym.u[keep]
        zone = (max(x[keep][0] - half[0], lo), min(x[keep][-1] + half[-1], hi))
        zones.append(zone)
        parts_x.append(x[keep])
        parts_w.append(lam2 * asym.u[keep])
        parts_s.append(np.full(keep.sum(), s))
        parts_j.append(np.flatnonzero(keep))

    zones.sort()
    if any(a[1] > b[0] for a, b in zip(zones, zones[1:])):
        raise GridConflict("scaled zones of different eigenvalues collide")

    # window minus zones, split at cell boundaries
    free = []
    cursor = lo_w
    for a, b in zones:
        free.append((cursor, a))
        cursor = b
    free.append((cursor, hi_w))
    cuts = [c for c in model.partition.boundaries if lo_w < c < hi_w]
    pieces = []
    for a, b in free:
        inner = [c for c in cuts if a < c < b]
        edges = [a] + inner + [b]
        pieces.extend(zip(edges[:-1], edges[1:]))

    free_length = sum(b - a for a, b in pieces)
    h_bg = policy.h_bg or max(free_length / asym.size, 1e-12)
    for a, b in pieces:
        xb, wb = _background(a, b, h_bg)
        parts_x.append(xb)
        parts_w.append(wb)
        parts_s.append(np.full(len(xb), BACKGROUND))
        parts_j.append(np.full(len(xb), -1))

    nodes = np.concatenate(parts_x)
    order = np.argsort(nodes, kind="stable")
    nodes = nodes[order]
    if np.any(np.diff(nodes) <= 0):
        raise GridConflict("duplicate reservoir nodes")
    cells = model.partition.cell_index(nodes)
    dims = np.array([model.partition.cells[c].fiber_dim for c in cells], dtype=int)

    grid = ReservoirGrid(
        lam=lam,
        nodes=nodes,
        weights=np.concatenate(parts_w)[order],
        fiber_dims=dims,
        cells=cells,
        sector=np.concatenate(parts_s)[order].astype(int),
        asym_index=np.concatenate(parts_j)[order].astype(int),
        eigenvalues=model.small.eigenvalues,
        asymptotic_key=asym.fingerprint(),
    )
    logger.debug(f"Grid lambda={lam:g}: {len(nodes)} nodes, h_bg={h_bg:.3g}")
    return grid


# ============================================================================
# Assembly
# ============================================================================

@dataclass(frozen=True)
class DiscretizedFriedrichs:
    """H_lambda on the grid, with the unscaled coupling block V. The dense H is built on first use."""

    lam: float
    V: np.ndarray
    grid: ReservoirGrid
    model: FriedrichsModel

    @cached_property
    def H(self) -> np.ndarray:
        d = self.small_dim
        n = d + self.grid.size
        H = np.zeros((n, n), dtype=complex)
        H[:d, :d] = self.model.small.E
        H[d:, d:][np.diag_indices(self.grid.size)] = self.reservoir_diagonal
        block = self.lam * self.V
        H[d:, :d] = block
        H[:d, d:] = block.conj().T
        return H

    @property
    def small_dim(self) -> int:
        return self.model.dim_e

    @property
    def small_rows(self) -> slice:
        return slice(0, self.small_dim)

    def node_rows(self, i: int) -> np.ndarray:
        start = self.small_dim + self.grid.offsets[i]
        return np.arange(start, start + self.grid.fiber_dims[i])

    @property
    def reservoir_diagonal(self) -> np.ndarray:
        return np.repeat(self.grid.nodes, self.grid.fiber_dims)


def coupling_matrix(model: FriedrichsModel, grid: ReservoirGrid) -> np.ndarray:
    """
    V with node-j block sqrt(w_j) v(x_j), shape (sum fiber_dims, dim E).

    Raises:
        DimensionMismatch: If v(x_j) rows disagree with the grid fiber dims
    """
    dim_e = model.dim_e
    V = np.zeros((grid.size, dim_e), dtype=complex)
    offsets = grid.offsets
    for cell in np.unique(grid.cells):
        idx = np.flatnonzero(grid.cells == cell)
        fd = int(grid.fiber_dims[idx[0]])
        vals = model.coupling.evaluate_cell(grid.nodes[idx], int(cell))
        if vals.shape != (len(idx), fd, dim_e):
            raise DimensionMismatch(
                f"coupling on cell {cell} has shape {vals.shape[1:]}, expected {(fd, dim_e)}"
            )
        rows = offsets[idx][:, None] + np.arange(fd)[None, :]
        V[rows] = np.sqrt(grid.weights[idx])[:, None, None] * vals
    return V


def assemble(model: FriedrichsModel, grid: ReservoirGrid, lam: float) -> DiscretizedFriedrichs:
    """
    Assemble H_lambda = [[E, lam V*], [lam V, diag(x)]] with mirrored entries.
    Only V is computed here; the dense matrix is materialized by .H.

    Args:
        model: Friedrichs model
        grid: reservoir grid built for this model
        lam: coupling (lam = 0 gives E + H_R)

    Returns:
        DiscretizedFriedrichs
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return DiscretizedFriedrichs(lam=lam, V=coupling_matrix(model, grid), grid=grid, model=model)
