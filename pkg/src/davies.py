"""
Davies generator Gamma by three routes: closed form (PV + pole), stationary
epsilon-resolvent limit, and the time-dependent integral up to a horizon T.

Sign convention: Gamma_e = 1_e (-P int v*v/(x-e) dx - i pi v*(e)v(e)) 1_e, the
boundary value of V*(e + i0 - H_R)^{-1} V, so Im Gamma = -pi nu* nu <= 0.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import sici

from .config import DaviesConfig, GridPolicy
from .errors import ConditionViolated, ExtrapolationUnstable, FriedrichsError, QuadratureFailure, RecurrenceGuard
from .json_utils import encode_complex_matrix
from .model import (
    DiscretizedFriedrichs,
    FriedrichsModel,
    ReservoirGrid,
    SmallSystem,
    assemble,
    build_grid,
)
from .schemas import DaviesReport, DaviesRouteResult

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class DaviesGenerator:
    """Per-eigenvalue blocks Gamma_e (embedded in dim E) and the couplings nu_e."""

    small: SmallSystem
    blocks: dict[float, np.ndarray]
    nu_blocks: dict[float, np.ndarray]
    route: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        out = np.zeros_like(self.small.E)
        for block in self.blocks.values():
            out = out + block
        return out

    @property
    def nu(self) -> np.ndarray:
        """Stacked nu = (+)_e nu_e, shape (sum dim h_e, dim E)."""
        parts = [self.nu_blocks[e] for e in self.small.eigenvalues if e in self.nu_blocks]
        return np.vstack(parts) if parts else np.zeros((0, self.small.dim), dtype=complex)

    def dissipativity(self) -> float:
        """Largest eigenvalue of (Gamma - Gamma*)/2i."""
        g = self.total
        return float(np.linalg.eigvalsh((g - g.conj().T) / 2j)[-1])

    def condition_residual(self) -> float:
        """||(Gamma - Gamma*)/2i + pi nu* nu||."""
        g = self.total
        nu = self.nu
        return float(np.linalg.norm((g - g.conj().T) / 2j + math.pi * nu.conj().T @ nu, 2))


def _eigenvalues(small: SmallSystem, e: Optional[float]) -> list[float]:
    return list(small.eigenvalues) if e is None else [small.eigenvalue(e)]


# ============================================================================
# Principal value quadrature
# ============================================================================

def pv_integral(
    f: Callable[[float], np.ndarray],
    e: float,
    window: tuple[float, float],
    tol: float = 1e-8,
    max_depth: int = 12,
    points: Sequence[float] = (),
) -> np.ndarray:
    """
    P int_window f(x)/(x-e) dx by singularity subtraction on a symmetric panel.

    The panel [e-h, e+h] contributes int_0^h (f(e+s) - f(e-s))/s ds (the log
    term vanishes by symmetry); the rest is regular and integrated adaptively.
    The panel is halved until two successive estimates agree within tol.

    Args:
        f: x -> Hermitian matrix (or scalar)
        e: singular point, interior to the window
        window: (a, b), endpoints may be infinite
        tol: absolute tolerance
        max_depth: maximum number of panel halvings
        points: breakpoints (e.g. cell boundaries) for the regular part

    Returns:
        Hermitian matrix (same shape as f)

    Raises:
        QuadratureFailure: If the estimate does not settle within max_depth
    """
    a, b = window
    if not a < e < b:
        raise QuadratureFailure(f"e={e} not interior to window ({a}, {b})")

    def estimate(h: float) -> np.ndarray:
        def panel(s):
            return (np.asarray(f(e + s)) - np.asarray(f(e - s))) / s

        def regular(x):
            return np.asarray(f(x)) / (x - e)

        total = quad_vec(panel, 0.0, h, epsabs=tol / 8, epsrel=0.0)[0]
        pts_left = [p for p in points if a < p < e - h]
        pts_right = [p for p in points if e + h < p < b]
        for lo, hi, pts in ((a, e - h, pts_left), (e + h, b, pts_right)):
            segments = [lo] + pts + [hi]
            for s0, s1 in zip(segments[:-1], segments[1:]):
                total = total + quad_vec(regular, s0, s1, epsabs=tol / 8, epsrel=0.0, limit=2000)[0]
        return total

    h = 0.5 * min(1.0, e - a, b - e)
    previous = estimate(h)
    for _ in range(max_depth):
        h *= 0.5
        current = estimate(h)
        if np.max(np.abs(current - previous)) <= tol:
            result = np.asarray(current)
            if result.ndim == 2:
                result = (result + result.conj().T) / 2
            return result
        previous = current
    raise QuadratureFailure(f"PV integral at e={e} did not settle to {tol:.1e} after {max_depth} halvings")


# ============================================================================
# Closed form
# ============================================================================

def extract_nu(model: FriedrichsModel) -> dict[float, np.ndarray]:
    """nu_e = v(e) 1_{E_e}, shape (dim h_e, dim E)."""
    nu = {}
    for e, proj in zip(model.small.eigenvalues, model.small.projections):
        nu[e] = model.coupling.evaluate(e, model.partition) @ proj
    return nu


def closed_form(model: FriedrichsModel, tol: float = 1e-8, max_depth: int = 12) -> DaviesGenerator:
    """
    Gamma_e = 1_e (-P int v*v/(x-e) dx - i pi v*(e)v(e)) 1_e for every eigenvalue.

    Args:
        model: validated model
        tol: PV quadrature tolerance

    Returns:
        DaviesGenerator with route "closed"
    """
    nu = extract_nu(model)
    window = model.partition.window
    points = [float(p) for p in model.partition.boundaries]
    blocks = {}
    pv_parts = {}
    for e, proj in zip(model.small.eigenvalues, model.small.projections):

        def gram(x, proj=proj):
            return proj @ model.coupling.gram([x], model.partition)[0] @ proj

        pv = pv_integral(gram, e, window, tol=tol, max_depth=max_depth, points=points)
        pole = nu[e].conj().T @ nu[e]
        blocks[e] = -pv - 1j * math.pi * pole
        pv_parts[f"{e:g}"] = pv
    return DaviesGenerator(small=model.small, blocks=blocks, nu_blocks=nu, route="closed",
                           diagnostics={"pv": pv_parts})


# ============================================================================
# Stationary route
# ============================================================================

def _self_energy(disc: DiscretizedFriedrichs, proj: np.ndarray, w: complex) -> np.ndarray:
    """1_e V*(w - H_R)^{-1} V 1_e on the discrete reservoir."""
    vp = disc.V @ proj
    d = 1.0 / (w - disc.reservoir_diagonal)
    return vp.conj().T @ (d[:, None] * vp)


def richardson(values: Sequence[np.ndarray], steps: Sequence[float], delta: float) -> list[list[np.ndarray]]:
    """
    Richardson tableau for errors ~ c1 eps^delta + c2 eps^(2 delta) + ...

    Neville form in x = eps^delta. Returns rows T[i][0..i]; T[-1][-1] is the extrapolant.
    """
    table = [[np.asarray(values[0])]]
    for i in range(1, len(values)):
        row = [np.asarray(values[i])]
        for j in range(1, i + 1):
            ratio = (steps[i - j] / steps[i]) ** delta
            row.append(row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (ratio - 1.0))
        table.append(row)
    return table


def stationary(
    disc: DiscretizedFriedrichs,
    e: Optional[float] = None,
    z: complex = 1j,
    epsilons: Sequence[float] = (0.1, 0.05, 0.025),
    tol: float = 1e-3,
    z_check: Optional[complex] = 1 + 1j,
) -> DaviesGenerator:
    """
    Gamma_e^st = lim 1_e V*(e + eps z - H_R)^{-1} V 1_e, Richardson-extrapolated.

    Args:
        disc: discretization (only the reservoir and V are used)
        e: eigenvalue, or None for all
        z: spectral parameter with Im z > 0
        epsilons: strictly decreasing sequence
        tol: extrapolation tolerance
        z_check: second z for the independence check (None to skip)

    Raises:
        ExtrapolationUnstable: If the smallest eps is below 10x the local
            grid spacing, or successive extrapolants differ by more than 10 tol
    """
    if z.imag <= 0:
        raise ValueError("stationary route needs Im z > 0")
    eps = [float(x) for x in epsilons]
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")

    model = disc.model
    delta = model.coupling.holder_delta
    blocks, diagnostics = {}, {}
    for ev in _eigenvalues(model.small, e):
        spacing = disc.grid.spacing_near(ev)
        if eps[-1] < 10 * spacing:
            raise ExtrapolationUnstable(
                f"eps={eps[-1]:g} below 10x grid spacing {spacing:.3g} near e={ev:g}"
            )
        proj = model.small.projection(ev)
        raw = [_self_energy(disc, proj, ev + x * z) for x in eps]
        table = richardson(raw, eps, delta)
        diag_entries = [table[i][i] for i in range(len(table))]
        if len(diag_entries) >= 2:
            jump = float(np.linalg.norm(diag_entries[-1] - diag_entries[-2], 2))
            if jump > 10 * tol:
                raise ExtrapolationUnstable(
                    f"successive extrapolants differ by {jump:.3e} (> {10 * tol:.1e}) at e={ev:g}"
                )
        blocks[ev] = diag_entries[-1]
        info = {"raw": raw, "extrapolants": diag_entries}
        if z_check is not None:
            other = _self_energy(disc, proj, ev + eps[-1] * z_check)
            info["z_discrepancy"] = float(np.linalg.norm(other - raw[-1], 2))
        diagnostics[f"{ev:g}"] = info

    nu = {ev: v for ev, v in extract_nu(model).items() if ev in blocks}
    return DaviesGenerator(small=model.small, blocks=blocks, nu_blocks=nu, route="stationary",
                           diagnostics=diagnostics)


# ============================================================================
# Dynamic route
# ============================================================================

def _cin(x: np.ndarray) -> np.ndarray:
    """Cin(x) = int_0^x (1 - cos s)/s ds for x >= 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-3
    xs = x[small]
    out[small] = xs ** 2 / 4 - xs ** 4 / 96 + xs ** 6 / 4320
    xl = x[~small]
    out[~small] = EULER_GAMMA + np.log(xl) - sici(xl)[1]
    return out


def cell_kernel(lower: np.ndarray, upper: np.ndarray, T: float) -> np.ndarray:
    """
    int_lower^upper (1 - e^{-iTu})/(iu) du, exact per cell.

    Equals [Si(Tu)] - i [Cin(T|u|)] between the cell edges.
    """
    if T == 0:
        return np.zeros(np.shape(lower), dtype=complex)
    si_u = sici(T * upper)[0]
    si_l = sici(T * lower)[0]
    return (si_u - si_l) - 1j * (_cin(T * np.abs(upper)) - _cin(T * np.abs(lower)))


def _dynamic_value(model: FriedrichsModel, grid: ReservoirGrid, gram: np.ndarray,
                   ev: float, T: float) -> np.ndarray:
    u = grid.nodes - ev
    half = 0.5 * grid.weights
    kernel = cell_kernel(u - half, u + half, T)
    return -1j * np.einsum("n,nij->ij", kernel, gram)


def dynamic(
    model: FriedrichsModel,
    grid: ReservoirGrid,
    e: Optional[float] = None,
    T: float = 1e3,
) -> DaviesGenerator:
    """
    Gamma_e^dyn = -i int_0^T 1_e V* e^{-is(H_R - e)} V 1_e ds.

    The s-integral is done in closed form and then integrated exactly over
    each quadrature cell, so the coarse background does not alias at large T.
    The value at T/2 is kept for the tail estimate |Gamma(T) - Gamma(T/2)|.

    Raises:
        RecurrenceGuard: If T * (spacing near e) > 0.5
    """
    if T < 0:
        raise ValueError(f"horizon must be >= 0, got {T}")
    blocks, diagnostics = {}, {}
    for ev in _eigenvalues(model.small, e):
        spacing = grid.spacing_near(ev)
        if T * spacing > 0.5 * (1 + 1e-9):
            raise RecurrenceGuard(f"T*spacing = {T * spacing:.3g} > 0.5 near e={ev:g}")
        proj = model.small.projection(ev)
        gram = proj @ model.coupling.gram(grid.nodes, model.partition) @ proj
        value = _dynamic_value(model, grid, gram, ev, T)
        half_value = _dynamic_value(model, grid, gram, ev, T / 2)
        blocks[ev] = value
        diagnostics[f"{ev:g}"] = {
            "half_horizon": half_value,
            "tail_estimate": float(np.linalg.norm(value - half_value, 2)),
        }
    nu = {ev: v for ev, v in extract_nu(model).items() if ev in blocks}
    return DaviesGenerator(small=model.small, blocks=blocks, nu_blocks=nu, route="dynamic",
                           diagnostics=diagnostics)


# ============================================================================
# Route comparison
# ============================================================================

ROUTES = ("closed", "stationary", "dynamic")


def _summarize(gen: DaviesGenerator) -> dict:
    """Scalar diagnostics of a route (arrays are reduced to norms)."""
    out: dict = {}
    for key, info in gen.diagnostics.items():
        if not isinstance(info, dict):
            continue
        entry = {}
        if "tail_estimate" in info:
            entry["tail_estimate"] = info["tail_estimate"]
        if "z_discrepancy" in info:
            entry["z_discrepancy"] = info["z_discrepancy"]
        if "extrapolants" in info and len(info["extrapolants"]) >= 2:
            ex = info["extrapolants"]
            entry["extrapolant_jump"] = float(np.linalg.norm(ex[-1] - ex[-2], 2))
        out[key] = entry
    return out


def run_routes(
    model: FriedrichsModel,
    routes: Sequence[str] = ROUTES,
    config: Optional[DaviesConfig] = None,
    policy: Optional[GridPolicy] = None,
) -> tuple[DaviesReport, dict[str, DaviesGenerator]]:
    """
    Compute Gamma by each requested route, collecting per-route failures.

    The stationary and dynamic routes share one grid adapted to
    config.adapt_lambda so the spacing near every eigenvalue is fine enough for
    the epsilon guard and the recurrence guard.

    Returns:
        (DaviesReport, successful generators by route)
    """
    config = config or DaviesConfig()
    policy = policy or GridPolicy()
    unknown = set(routes) - set(ROUTES)
    if unknown:
        raise ValueError(f"Unknown route(s) {sorted(unknown)}; expected {list(ROUTES)}")

    generators: dict[str, DaviesGenerator] = {}
    failures: dict[str, str] = {}
    disc = None
    for route in routes:
        try:
            if route == "closed":
                gen = closed_form(model, tol=config.pv_tol, max_depth=config.pv_max_depth)
                residual = gen.condition_residual()
                if residual > config.route_tol:
                    raise ConditionViolated(
                        f"closed form residual {residual:.3e} exceeds route_tol {config.route_tol:.1e}"
                    )
            else:
                if disc is None:
                    grid = build_grid(model, config.adapt_lambda, policy)
                    disc = assemble(model, grid, config.adapt_lambda)
                if route == "stationary":
                    gen = stationary(disc, z=complex(*config.z), epsilons=config.epsilons,
                                     tol=config.extrapolation_tol, z_check=complex(*config.z_check))
                else:
                    gen = dynamic(model, disc.grid, T=config.horizon)
            generators[route] = gen
            logger.info(f"Route {route}: Gamma = {np.array2string(gen.total, precision=6)}")
        except FriedrichsError as e:
            logger.warning(f"Route {route} failed: {e}")
            failures[route] = f"{type(e).__name__}: {e}"

    results = [
        DaviesRouteResult(
            route=route,
            blocks={f"{e:g}": encode_complex_matrix(b) for e, b in gen.blocks.items()},
            total=encode_complex_matrix(gen.total),
            dissipativity=gen.dissipativity(),
            condition_residual=gen.condition_residual(),
            diagnostics=_summarize(gen),
        )
        for route, gen in generators.items()
    ]
    names = list(generators)
    cross = {
        f"{a}-{b}": float(np.linalg.norm(generators[a].total - generators[b].total, 2))
        for i, a in enumerate(names) for b in names[i + 1:]
    }
    nu = {f"{e:g}": encode_complex_matrix(v) for e, v in extract_nu(model).items()}
    report = DaviesReport(model=model.name, nu=nu, routes=results, cross_differences=cross, failures=failures)
    return report, generators
