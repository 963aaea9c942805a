"""Classical dynamics in time-dependent quadratic potentials.

The potential is ``V(x, t) = a(t) + b(t) x + c(t) x**2`` with equation of motion
``m x'' + 2 c(t) x = -b(t)``; the harmonic oscillator corresponds to
``c = m omega**2 / 2``.

The ODE is linear, so one classical RK4 step is an affine map of ``(x, p)``.
All steps are assembled at once as 3x3 augmented matrices and chained with a
parallel prefix product, which reproduces step-by-step RK4 to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    CoefficientDomain,
    ConjugatePoint,
    GridMismatch,
    InvalidInput,
    NonPositiveInterval,
    NonSymplecticMap,
    OutOfInterval,
)

TOL_DET = 1e-8
TOL_WRONSKIAN = 1e-8
TOL_TRAJ = 1e-7
TOL_ACTION = 1e-7
EPS_H = 1e-10

STEPS_PER_UNIT_TIME = 4096


@dataclass(frozen=True)
class Coefficient:
    """A scalar function of time, either a polynomial (constants included) or a sampled table.

    Tables are interpolated with cubic Hermite segments whose node slopes come
    from second-order finite differences. Tables never extrapolate.
    """

    kind: str
    coeffs: tuple = ()
    t0: float = 0.0
    dt: float = 1.0
    _spline: Optional[CubicHermiteSpline] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("const", "poly", "table"):
            raise InvalidInput(f"unknown coefficient kind {self.kind!r}")
        vals = np.asarray(self.coeffs, dtype=float)
        if vals.size == 0:
            raise InvalidInput("coefficient needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise CoefficientDomain("coefficient values must be finite")
        if self.kind == "const" and vals.size != 1:
            raise InvalidInput("constant coefficient takes exactly one value")
        if self.kind == "table":
            if vals.size < 2:
                raise InvalidInput("coefficient table needs at least two samples")
            if not self.dt > 0:
                raise InvalidInput("coefficient table spacing must be positive")
            t = self.t0 + self.dt * np.arange(vals.size)
            slopes = np.gradient(vals, self.dt, edge_order=2) if vals.size > 2 else np.full(2, (vals[1] - vals[0]) / self.dt)
            object.__setattr__(self, "_spline", CubicHermiteSpline(t, vals, slopes, extrapolate=False))

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        return cls("const", (float(value),))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "Coefficient":
        """Coefficients in increasing order: ``c0 + c1 t + c2 t**2 + ...``."""
        return cls("poly", tuple(float(c) for c in coeffs))

    @classmethod
    def table(cls, t0: float, dt: float, values: Sequence[float]) -> "Coefficient":
        return cls("table", tuple(float(v) for v in values), float(t0), float(dt))

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind != "table":
            return (-math.inf, math.inf)
        return (self.t0, self.t0 + self.dt * (len(self.coeffs) - 1))

    def covers(self, t_a: float, t_b: float) -> bool:
        lo, hi = self.domain
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        return lo - slack <= t_a and t_b <= hi + slack

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.full(t.shape, self.coeffs[0])
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(t, self.coeffs)
        lo, hi = self.domain
        # snap round-off at the table ends instead of returning nan
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        tc = np.where((t < lo) & (t >= lo - slack), lo, t)
        tc = np.where((tc > hi) & (tc <= hi + slack), hi, tc)
        out = self._spline(tc)
        if np.any(np.isnan(out)):
            raise CoefficientDomain(f"coefficient table covers [{lo}, {hi}], evaluated outside")
        return out

    def to_json(self) -> dict:
        if self.kind == "const":
            return {"const": self.coeffs[0]}
        if self.kind == "poly":
            return {"poly": list(self.coeffs)}
        return {"table": {"t0": self.t0, "dt": self.dt, "values": list(self.coeffs)}}

    @classmethod
    def from_json(cls, obj) -> "Coefficient":
        if isinstance(obj, (int, float)):
            return cls.constant(obj)
        if "const" in obj:
            return cls.constant(obj["const"])
        if "poly" in obj:
            return cls.polynomial(obj["poly"])
        if "table" in obj:
            tab = obj["table"]
            return cls.table(tab["t0"], tab["dt"], tab["values"])
        raise InvalidInput(f"cannot parse coefficient {obj!r}")


ZERO = Coefficient.constant(0.0)


@dataclass(frozen=True)
class QuadraticPotential:
    """``V(x, t) = a(t) + b(t) x + c(t) x**2`` acting on a particle of mass ``m``."""

    m: float
    a: Coefficient = ZERO
    b: Coefficient = ZERO
    c: Coefficient = ZERO

    def __post_init__(self):
        if not (np.isfinite(self.m) and self.m > 0):
            raise InvalidInput("mass m must be positive")

    @classmethod
    def free(cls, m: float = 1.0) -> "QuadraticPotential":
        return cls(m)

    @classmethod
    def harmonic(cls, m: float, omega: float) -> "QuadraticPotential":
        return cls(m, c=Coefficient.constant(0.5 * m * omega**2))

    def check_interval(self, t_a: float, t_b: float) -> None:
        if not t_b > t_a:
            raise NonPositiveInterval(f"need t_b > t_a, got [{t_a}, {t_b}]")
        for name in "abc":
            if not getattr(self, name).covers(t_a, t_b):
                raise CoefficientDomain(f"coefficient {name} does not cover [{t_a}, {t_b}]")

    def max_stiffness(self, t_a: float, t_b: float) -> float:
        t = np.linspace(t_a, t_b, 1025)
        return float(np.max(np.abs(self.c(t))))

    def default_steps(self, t_a: float, t_b: float) -> int:
        rate = max(1.0, math.sqrt(2.0 * self.max_stiffness(t_a, t_b) / self.m))
        return max(2, math.ceil(STEPS_PER_UNIT_TIME * (t_b - t_a) * rate))

    def to_json(self) -> dict:
        return {"m": self.m, "a": self.a.to_json(), "b": self.b.to_json(), "c": self.c.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "QuadraticPotential":
        kw = {k: Coefficient.from_json(obj[k]) for k in "abc" if k in obj}
        return cls(float(obj["m"]), **kw)


@dataclass(frozen=True)
class AffineSymplecticMap:
    """Phase-space flow ``z_b = M z_a + d`` with ``z = (x, p)``."""

    M: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        M = np.array(self.M, dtype=float).reshape(2, 2)
        d = np.array(self.d, dtype=float).reshape(2)
        M.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "d", d)
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(d))):
            raise NonSymplecticMap("map contains non-finite entries")
        if self.det_deviation > TOL_DET:
            raise NonSymplecticMap(f"|det M - 1| = {self.det_deviation:.3e} exceeds {TOL_DET}")

    @classmethod
    def identity(cls) -> "AffineSymplecticMap":
        return cls(np.eye(2), np.zeros(2))

    @property
    def det_deviation(self) -> float:
        return abs(float(np.linalg.det(self.M)) - 1.0)

    def apply(self, z):
        """Map points ``z`` of shape (..., 2)."""
        z = np.asarray(z, dtype=float)
        return z @ self.M.T + self.d

    def compose(self, first: "AffineSymplecticMap") -> "AffineSymplecticMap":
        """``self o first``: apply ``first``, then ``self``."""
        return AffineSymplecticMap(self.M @ first.M, self.M @ first.d + self.d)

    def inverse(self) -> "AffineSymplecticMap":
        Minv = np.array([[self.M[1, 1], -self.M[0, 1]], [-self.M[1, 0], self.M[0, 0]]]) / np.linalg.det(self.M)
        return AffineSymplecticMap(Minv, -Minv @ self.d)


@dataclass(frozen=True)
class HomogeneousBasis:
    """Solutions of ``m x'' + 2 c(t) x = 0`` with x1(t_a)=1, x1'(t_a)=0, x2(t_a)=0, x2'(t_a)=1."""

    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x1dot: np.ndarray
    x2dot: np.ndarray
    W: float = -1.0

    @property
    def t_a(self) -> float:
        return float(self.times[0])

    @property
    def t_b(self) -> float:
        return float(self.times[-1])

    def wronskian(self) -> np.ndarray:
        """Wronskian ``x1' x2 - x2' x1`` at every grid node."""
        return self.x1dot * self.x2 - self.x2dot * self.x1

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.t_a), abs(self.t_b))
        if np.any(t < self.t_a - slack) or np.any(t > self.t_b + slack):
            raise OutOfInterval(f"t outside basis interval [{self.t_a}, {self.t_b}]")
        return np.clip(t, self.t_a, self.t_b)

    def evaluate(self, t):
        """Return ``(x1, x2, x1dot, x2dot)`` at arbitrary times inside the grid."""
        t = self._check(t)
        s1 = CubicHermiteSpline(self.times, self.x1, self.x1dot)
        s2 = CubicHermiteSpline(self.times, self.x2, self.x2dot)
        return s1(t), s2(t), s1(t, 1), s2(t, 1)

    def h(self, s, t):
        """``h(s, t) = x1(s) x2(t) - x2(s) x1(t)``."""
        x1s, x2s, _, _ = self.evaluate(s)
        x1t, x2t, _, _ = self.evaluate(t)
        return x1s * x2t - x2s * x1t


@dataclass(frozen=True)
class ClassicalTrajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    x_a: float
    p_a: float

    @property
    def x_b(self) -> float:
        return float(self.x[-1])

    @property
    def p_b(self) -> float:
        return float(self.p[-1])


# --- RK4 assembly ------------------------------------------------------------

def _time_grid(t_a: float, t_b: float, n_steps: int) -> np.ndarray:
    return np.linspace(t_a, t_b, n_steps + 1)


def _rk4_step_matrices(pot: QuadraticPotential, t_a: float, t_b: float, n_steps: int) -> np.ndarray:
    """Augmented 3x3 RK4 update for every step of ``(x, p, 1)``."""
    h = (t_b - t_a) / n_steps
    t = _time_grid(t_a, t_b, n_steps)
    tm = t[:-1] + 0.5 * h
    # coefficients at nodes and midpoints, evaluated once
    b_n, c_n = pot.b(t), pot.c(t)
    b_m, c_m = pot.b(tm), pot.c(tm)
    if not (np.all(np.isfinite(c_n)) and np.all(np.isfinite(c_m)) and np.all(np.isfinite(b_n)) and np.all(np.isfinite(b_m))):
        raise CoefficientDomain("potential coefficients are not finite on the interval")

    def generator(b, c):
        G = np.zeros((b.size, 3, 3))
        G[:, 0, 1] = 1.0 / pot.m
        G[:, 1, 0] = -2.0 * c
        G[:, 1, 2] = -b
        return G

    G0 = generator(b_n[:-1], c_n[:-1])
    Gm = generator(b_m, c_m)
    G1 = generator(b_n[1:], c_n[1:])
    eye = np.eye(3)
    K1 = G0
    K2 = Gm @ (eye + 0.5 * h * K1)
    K3 = Gm @ (eye + 0.5 * h * K2)
    K4 = G1 @ (eye + h * K3)
    return eye + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def _prefix_products(S: np.ndarray) -> np.ndarray:
    """``P[k] = S[k-1] ... S[0]`` for k = 0..n (P[0] = I), by doubling."""
    acc = S.copy()
    shift = 1
    while shift < len(acc):
        acc[shift:] = acc[shift:] @ acc[:-shift]
        shift *= 2
    return np.concatenate([np.eye(3)[None], acc])


def _total_product(S: np.ndarray) -> np.ndarray:
    acc = S
    while len(acc) > 1:
        paired = acc[1 : len(acc) - len(acc) % 2 : 2] @ acc[0 : len(acc) - len(acc) % 2 : 2]
        acc = np.concatenate([paired, acc[-1:]]) if len(acc) % 2 else paired
    return acc[0]


def _resolve(pot: QuadraticPotential, t_a: float, t_b: float, n_steps: Optional[int]) -> int:
    pot.check_interval(t_a, t_b)
    if n_steps is None:
        return pot.default_steps(t_a, t_b)
    if n_steps < 2:
        raise InvalidInput("n_steps must be at least 2")
    return int(n_steps)


# --- operations --------------------------------------------------------------

def solve_homogeneous(pot: QuadraticPotential, t_a: float, t_b: float, n_steps: Optional[int] = None) -> HomogeneousBasis:
    n = _resolve(pot, t_a, t_b, n_steps)
    hom = QuadraticPotential(pot.m, c=pot.c)
    P = _prefix_products(_rk4_step_matrices(hom, t_a, t_b, n))
    # columns: x1 starts at (1, 0); x2 starts at x=0, xdot=1, i.e. p=m
    x1, p1 = P[:, 0, 0], P[:, 1, 0]
    x2, p2 = pot.m * P[:, 0, 1], pot.m * P[:, 1, 1]
    return HomogeneousBasis(_time_grid(t_a, t_b, n), x1, x2, p1 / pot.m, p2 / pot.m, W=-1.0)


def f_function(basis: HomogeneousBasis, t):
    """``f(t, t_a) = h(t, t_a) / W``; vanishes at t_a with unit slope."""
    return basis.h(t, basis.t_a) / basis.W


def classical_trajectory(pot: QuadraticPotential, x_a: float, p_a: float, t_a: float, t_b: float,
                         n_steps: Optional[int] = None) -> ClassicalTrajectory:
    n = _resolve(pot, t_a, t_b, n_steps)
    P = _prefix_products(_rk4_step_matrices(pot, t_a, t_b, n))
    z = P @ np.array([x_a, p_a, 1.0])
    x, p = z[:, 0].copy(), z[:, 1].copy()
    x[0], p[0] = x_a, p_a
    return ClassicalTrajectory(_time_grid(t_a, t_b, n), x, p, float(x_a), float(p_a))


def flow_map(pot: QuadraticPotential, t_a: float, t_b: float, n_steps: Optional[int] = None,
             route: str = "ivp") -> AffineSymplecticMap:
    """Classical flow ``(x_a, p_a) -> (x_b, p_b)`` over ``[t_a, t_b]``.

    ``route="ivp"`` integrates the initial-value problem and is valid through
    focal points. ``route="bvp"`` rebuilds the map from the homogeneous basis
    and the boundary-velocity formulas, and refuses conjugate times.
    """
    n = _resolve(pot, t_a, t_b, n_steps)
    if route == "ivp":
        T = _total_product(_rk4_step_matrices(pot, t_a, t_b, n))
        return AffineSymplecticMap(T[:2, :2], T[:2, 2])
    if route != "bvp":
        raise InvalidInput(f"unknown route {route!r}")
    basis = solve_homogeneous(pot, t_a, t_b, n)
    h_ab = _h_ab(basis)
    W = basis.W
    x1, x2, x1d, x2d = basis.x1, basis.x2, basis.x1dot, basis.x2dot
    dh_da = x1d[0] * x2[-1] - x2d[0] * x1[-1]
    dh_db = x1[0] * x2d[-1] - x2[0] * x1d[-1]
    I_a, I_b = _forcing_integrals(pot, basis)
    m = pot.m
    # invert the t_a velocity relation for x_b, then feed the t_b relation
    # p_a/m = (x_a dh_da - x_b W + I_b) / h_ab
    xb_x, xb_p, xb_0 = dh_da / W, -h_ab / (m * W), I_b / W
    # p_b/m = (x_a W + x_b dh_db - I_a) / h_ab
    pb_x = m * (W + dh_db * xb_x) / h_ab
    pb_p = m * (dh_db * xb_p) / h_ab
    pb_0 = m * (dh_db * xb_0 - I_a) / h_ab
    return AffineSymplecticMap([[xb_x, xb_p], [pb_x, pb_p]], [xb_0, pb_0])


def _h_ab(basis: HomogeneousBasis) -> float:
    h_ab = float(basis.x1[0] * basis.x2[-1] - basis.x2[0] * basis.x1[-1])
    if abs(h_ab) < EPS_H:
        raise ConjugatePoint(f"|h(t_a, t_b)| = {abs(h_ab):.3e}: t_a and t_b are conjugate")
    return h_ab


def _forcing_integrals(pot: QuadraticPotential, basis: HomogeneousBasis) -> tuple[float, float]:
    """``(int b/m h(t_a, s) ds, int b/m h(s, t_b) ds)`` over the basis interval."""
    t = basis.times
    bm = pot.b(t) / pot.m
    h_as = basis.x1[0] * basis.x2 - basis.x2[0] * basis.x1
    h_sb = basis.x1 * basis.x2[-1] - basis.x2 * basis.x1[-1]
    return float(simpson(bm * h_as, x=t)), float(simpson(bm * h_sb, x=t))


def boundary_velocities(pot: QuadraticPotential, basis: HomogeneousBasis, x_a: float, x_b: float) -> tuple[float, float]:
    """Initial and final velocities of the path joining ``x_a`` to ``x_b``."""
    h_ab = _h_ab(basis)
    W = basis.W
    x1, x2, x1d, x2d = basis.x1, basis.x2, basis.x1dot, basis.x2dot
    dh_da = x1d[0] * x2[-1] - x2d[0] * x1[-1]
    dh_db = x1[0] * x2d[-1] - x2[0] * x1d[-1]
    I_a, I_b = _forcing_integrals(pot, basis)
    v_a = (x_a * dh_da - x_b * W + I_b) / h_ab
    v_b = (x_a * W + x_b * dh_db - I_a) / h_ab
    return float(v_a), float(v_b)


def bvp_trajectory(pot: QuadraticPotential, basis: HomogeneousBasis, x_a: float, x_b: float) -> np.ndarray:
    """Boundary-value path ``x(t)`` on the basis grid, homogeneous part plus particular solution."""
    h_ab = _h_ab(basis)
    W = basis.W
    t = basis.times
    x1, x2 = basis.x1, basis.x2
    h_tb = x1 * x2[-1] - x2 * x1[-1]
    h_at = x1[0] * x2 - x2[0] * x1
    bm = pot.b(t) / pot.m
    left = cumulative_simpson(bm * h_at / W, x=t, initial=0.0)
    right_full = cumulative_simpson(bm * h_tb / W, x=t, initial=0.0)
    right = right_full[-1] - right_full
    x_p = -h_tb / h_ab * left - h_at / h_ab * right
    return h_tb / h_ab * x_a + h_at / h_ab * x_b + x_p


def classical_action(pot: QuadraticPotential, traj: ClassicalTrajectory) -> float:
    """Action along a trajectory by composite Simpson quadrature of the Lagrangian."""
    t = np.asarray(traj.times)
    if t.size < 3:
        raise GridMismatch("trajectory needs at least three nodes")
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise GridMismatch("trajectory grid is not uniform")
    for name in "abc":
        if not getattr(pot, name).covers(t[0], t[-1]):
            raise GridMismatch(f"coefficient {name} does not cover the trajectory grid")
    x, p = traj.x, traj.p
    lag = p**2 / (2.0 * pot.m) - pot.a(t) - pot.b(t) * x - pot.c(t) * x**2
    return float(simpson(lag, x=t))


def action_boundary_form(pot: QuadraticPotential, basis: HomogeneousBasis, x_a: float, x_b: float) -> float:
    """Classical action from boundary data: h-function terms, particular solution, offset ``a``."""
    h_ab = _h_ab(basis)
    W = basis.W
    t = basis.times
    x1, x2, x1d, x2d = basis.x1, basis.x2, basis.x1dot, basis.x2dot
    dh_da = x1d[0] * x2[-1] - x2d[0] * x1[-1]
    dh_db = x1[0] * x2d[-1] - x2[0] * x1d[-1]
    I_a, I_b = _forcing_integrals(pot, basis)
    m = pot.m
    hom = m / h_ab * (0.5 * (x_b**2 * dh_db - x_a**2 * dh_da) + W * x_a * x_b - x_b * I_a - x_a * I_b)
    x_p = bvp_trajectory(pot, basis, 0.0, 0.0)
    part = -0.5 * simpson(pot.b(t) * x_p, x=t)
    offset = -simpson(pot.a(t), x=t)
    return float(hom + part + offset)
