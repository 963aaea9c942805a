"""Wigner propagation for quadratic potentials.

For quadratic potentials the Wigner propagator is a product of delta functions
on the classical flow, so a state is simply pushed forward along
characteristics: Gaussians through their first two moments, grids by
backward (semi-Lagrangian) interpolation ``f_b(z) = f_a(M^-1 (z - d))``.

``liouville_oracle`` solves the same transport equation on the grid with a
different scheme (Strang splitting, local Lagrange shifts) and never
touches the flow map. It exists to cross-check the characteristics path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .dynamics import TOL_DET, AffineSymplecticMap, QuadraticPotential, flow_map
from .errors import DomainEscape, InvalidInput, NonSymplecticMap, StabilityViolation
from .states import TOL_NORM, GaussianWignerState, GridWignerState

ESCAPE_LIMIT = 1e-4
CFL_LIMIT = 0.5
ORACLE_ORDER = 5


@dataclass(frozen=True)
class PropagationResult:
    state: Union[GaussianWignerState, GridWignerState]
    map: AffineSymplecticMap
    det_deviation: float
    norm_drift: float
    escaped_mass: float = 0.0


def _check_map(fmap: AffineSymplecticMap) -> None:
    if fmap.det_deviation > TOL_DET:
        raise NonSymplecticMap(f"|det M - 1| = {fmap.det_deviation:.3e}")


def propagate_gaussian(state: GaussianWignerState, fmap: AffineSymplecticMap) -> GaussianWignerState:
    _check_map(fmap)
    M = fmap.M
    cov = M @ state.cov @ M.T
    cov = 0.5 * (cov + cov.T)
    return GaussianWignerState(M @ state.mean + fmap.d, cov, state.hbar)


def escaped_mass(state: GridWignerState, fmap: AffineSymplecticMap) -> float:
    """Mass whose forward image leaves the grid rectangle."""
    X, P = np.meshgrid(state.x, state.p, indexing="ij")
    xb, pb = fmap.M[0, 0] * X + fmap.M[0, 1] * P + fmap.d[0], fmap.M[1, 0] * X + fmap.M[1, 1] * P + fmap.d[1]
    outside = (xb < state.x[0]) | (xb > state.x[-1]) | (pb < state.p[0]) | (pb > state.p[-1])
    return float(np.abs(state.values[outside]).sum() * state.dx * state.dp)


def propagate_grid(state: GridWignerState, fmap: AffineSymplecticMap,
                   norm_tol: Optional[float] = TOL_NORM) -> GridWignerState:
    """Pull the grid back along the inverse flow with cubic-spline interpolation."""
    _check_map(fmap)
    lost = escaped_mass(state, fmap)
    if lost > ESCAPE_LIMIT:
        raise DomainEscape(f"probability mass {lost:.3e} leaves the grid")
    inv = fmap.inverse()
    X, P = np.meshgrid(state.x, state.p, indexing="ij")
    xa = inv.M[0, 0] * X + inv.M[0, 1] * P + inv.d[0]
    pa = inv.M[1, 0] * X + inv.M[1, 1] * P + inv.d[1]
    coords = np.stack([(xa - state.x[0]) / state.dx, (pa - state.p[0]) / state.dp])
    values = ndimage.map_coordinates(np.asarray(state.values), coords, order=3, mode="grid-constant", cval=0.0)
    return state.with_values(values, norm_tol=norm_tol)


def propagate(state, fmap: AffineSymplecticMap) -> PropagationResult:
    if isinstance(state, GaussianWignerState):
        return PropagationResult(propagate_gaussian(state, fmap), fmap, fmap.det_deviation, 0.0)
    lost = escaped_mass(state, fmap)
    out = propagate_grid(state, fmap)
    return PropagationResult(out, fmap, fmap.det_deviation, abs(out.norm - state.norm), lost)


def propagate_in_potential(state, pot: QuadraticPotential, t_a: float, t_b: float,
                           n_steps: Optional[int] = None) -> PropagationResult:
    return propagate(state, flow_map(pot, t_a, t_b, n_steps))


# --- Liouville oracle --------------------------------------------------------

def _lagrange_weights(u: np.ndarray, order: int):
    """Stencil offsets and weights of the odd-``order`` Lagrange interpolant at ``q0 + u``."""
    nodes = np.arange(-(order // 2), order // 2 + 2)
    weights = []
    for a in nodes:
        w = np.ones_like(u)
        for b in nodes:
            if b != a:
                w = w * (u - b) / (a - b)
        weights.append(w)
    return nodes, np.array(weights)


def _lagrange_shift(values: np.ndarray, shift_cells, axis: int, order: int = ORACLE_ORDER) -> np.ndarray:
    """``out[i] = f(i - s)`` along ``axis`` with local Lagrange weights, zero outside.

    ``shift_cells`` holds one shift per line orthogonal to ``axis``.
    """
    if order < 1 or order % 2 == 0:
        raise InvalidInput("interpolation order must be odd")
    rows = np.ascontiguousarray(values.T if axis == 0 else values)
    lines, n = rows.shape
    s = np.broadcast_to(np.asarray(shift_cells, dtype=float), (lines,))
    q = -s
    q0 = np.floor(q)
    nodes, weights = _lagrange_weights(q - q0, order)
    q0 = q0.astype(int)
    pad = int(np.max(np.abs(q0))) + order + 1
    padded = np.zeros((lines, n + 2 * pad))
    padded[:, pad : pad + n] = rows
    # one contiguous window per line covers every stencil node
    width = n + nodes[-1] - nodes[0]
    windows = np.lib.stride_tricks.sliding_window_view(padded, width, axis=1)
    win = windows[np.arange(lines), pad + q0 + nodes[0]]
    out = weights[0][:, None] * win[:, :n]
    for k in range(1, nodes.size):
        out += weights[k][:, None] * win[:, k : k + n]
    return np.ascontiguousarray(out.T) if axis == 0 else out


def cfl_number(state: GridWignerState, pot: QuadraticPotential, t_a: float, t_b: float, n_steps: int) -> float:
    dt = (t_b - t_a) / n_steps
    t = np.linspace(t_a, t_b, 2 * n_steps + 1)
    b, c = pot.b(t), pot.c(t)
    force = np.max(np.abs(b[:, None] + 2.0 * c[:, None] * np.array([state.x[0], state.x[-1]])[None, :]))
    drift = np.max(np.abs(state.p)) / pot.m
    return dt * max(drift / state.dx, force / state.dp)


def oracle_steps(state: GridWignerState, pot: QuadraticPotential, t_a: float, t_b: float, cfl: float = 0.4) -> int:
    """Smallest step count whose CFL number stays below ``cfl``."""
    n = max(1, math.ceil(cfl_number(state, pot, t_a, t_b, 1) / cfl))
    while cfl_number(state, pot, t_a, t_b, n) >= cfl:
        n += 1
    return n


def liouville_oracle(state: GridWignerState, pot: QuadraticPotential, t_a: float, t_b: float,
                     n_steps: Optional[int] = None, order: int = ORACLE_ORDER) -> GridWignerState:
    """Solve ``df/dt + (p/m) df/dx - (b + 2 c x) df/dp = 0`` by drift-kick-drift splitting.

    Each split step is a 1-D semi-Lagrangian shift with a degree-``order``
    Lagrange stencil (``order + 1`` nodes). Degree 3 is cheaper but visibly
    diffusive when a state spans only a few cells.
    """
    pot.check_interval(t_a, t_b)
    if n_steps is None:
        n_steps = oracle_steps(state, pot, t_a, t_b)
    cfl = cfl_number(state, pot, t_a, t_b, n_steps)
    if cfl >= CFL_LIMIT:
        raise StabilityViolation(f"CFL number {cfl:.3f} >= {CFL_LIMIT}; increase n_steps")
    dt = (t_b - t_a) / n_steps
    drift_cells = state.p / pot.m * dt / state.dx
    f = np.array(state.values, dtype=float)
    f = _lagrange_shift(f, 0.5 * drift_cells, axis=0, order=order)
    for k in range(n_steps):
        tm = t_a + (k + 0.5) * dt
        force = float(pot.b(tm)) + 2.0 * float(pot.c(tm)) * state.x
        # p-advection with velocity -(b + 2 c x): f(x, p) <- f(x, p + F dt)
        f = _lagrange_shift(f, -force * dt / state.dp, axis=1, order=order)
        f = _lagrange_shift(f, drift_cells if k < n_steps - 1 else 0.5 * drift_cells, axis=0, order=order)
    return state.with_values(f, norm_tol=None)


def l1_distance(a: GridWignerState, b: GridWignerState) -> float:
    return float(np.abs(np.asarray(a.values) - np.asarray(b.values)).sum() * a.dx * a.dp)


def covering_axes(states: Sequence[GaussianWignerState], nx: int = 256, np_: int = 256,
                  n_sigma: float = 8.0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform axes spanning ``n_sigma`` standard deviations of every given Gaussian."""
    lo = np.min([s.mean - n_sigma * np.sqrt(np.diag(s.cov)) for s in states], axis=0)
    hi = np.max([s.mean + n_sigma * np.sqrt(np.diag(s.cov)) for s in states], axis=0)
    return np.linspace(lo[0], hi[0], nx), np.linspace(lo[1], hi[1], np_)
