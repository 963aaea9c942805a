"""Wigner distributions: Gaussian closed forms, phase-space grids, and the Weyl pair.

Grid values are stored as ``values[i, j] = f(x[i], p[j])``.

The discrete Weyl transform works on a density matrix sampled with spacing
``dx``. Its Wigner grid lives on the half-spacing lattice ``dx / 2`` (centres
``(x_a + x_b) / 2`` of every pair of nodes), and the momentum axis is exact over
one alias-free band of width ``pi hbar / dx``. Separations beyond the sampled
matrix are treated as zero (zero padding), so no wraparound occurs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import (
    AliasedGrid,
    InadmissibleState,
    InvalidInput,
    NonHermitian,
    NonPositiveParameter,
    NonPositiveWidth,
    NonUniformGrid,
    NormalizationError,
)

TOL_NORM = 1e-6
TOL_HERMITIAN = 1e-12
TOL_REAL = 1e-10
TOL_RESYMMETRIZE = 1e-8
PURITY_SLACK = 1e-6
UNCERTAINTY_SLACK = 1e-9


def _uniform_spacing(axis: np.ndarray, name: str) -> float:
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size < 2:
        raise NonUniformGrid(f"{name} axis needs at least two nodes")
    steps = np.diff(axis)
    step = (axis[-1] - axis[0]) / (axis.size - 1)
    if not step > 0 or np.max(np.abs(steps - step)) > 1e-9 * abs(step):
        raise NonUniformGrid(f"{name} axis is not uniform and increasing")
    return float(step)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianWignerState:
    """Gaussian Wigner function given by its phase-space mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        mean = _frozen(np.reshape(self.mean, 2))
        cov = _frozen(np.reshape(self.cov, (2, 2)))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if not self.hbar > 0:
            raise NonPositiveParameter("hbar must be positive")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InadmissibleState("mean and covariance must be finite")
        scale = max(abs(cov[0, 1]), abs(cov[1, 0]), 1e-300)
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12 * scale:
            raise InadmissibleState("covariance must be symmetric")
        if cov[0, 0] <= 0 or cov[1, 1] <= 0 or self.det <= 0:
            raise InadmissibleState("covariance must be positive definite")
        floor = (self.hbar / 2) ** 2
        if self.det < floor * (1.0 - UNCERTAINTY_SLACK):
            raise InadmissibleState(f"det cov = {self.det:.6g} violates the uncertainty bound {floor:.6g}")

    @property
    def det(self) -> float:
        c = self.cov
        return float(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])

    @property
    def purity(self) -> float:
        """``2 pi hbar * int f**2``, equal to 1 for minimum-uncertainty states."""
        return 0.5 * self.hbar / math.sqrt(self.det)

    def pdf(self, x, p):
        x = np.asarray(x, dtype=float) - self.mean[0]
        p = np.asarray(p, dtype=float) - self.mean[1]
        inv = np.linalg.inv(self.cov)
        q = inv[0, 0] * x * x + 2.0 * inv[0, 1] * x * p + inv[1, 1] * p * p
        return np.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(self.det))

    def render(self, x_axis, p_axis, norm_tol: Optional[float] = TOL_NORM) -> "GridWignerState":
        X, P = np.meshgrid(x_axis, p_axis, indexing="ij")
        return GridWignerState(x_axis, p_axis, self.pdf(X, P), self.hbar, norm_tol=norm_tol)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(), "hbar": self.hbar}

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianWignerState":
        return cls(np.array(obj["mean"], dtype=float), np.array(obj["cov"], dtype=float), float(obj.get("hbar", 1.0)))


@dataclass(frozen=True)
class GridWignerState:
    """Wigner function sampled on a uniform ``(x, p)`` grid.

    ``norm_tol=None`` skips the normalization check, for intermediate results
    whose norm drift is reported separately.
    """

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray
    hbar: float = 1.0
    norm_tol: Optional[float] = TOL_NORM

    def __post_init__(self):
        x, p = _frozen(self.x), _frozen(self.p)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        self.dx, self.dp  # validates the axes
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals):
            raise InvalidInput("Wigner values must be real")
        vals = _frozen(vals)
        object.__setattr__(self, "values", vals)
        if vals.shape != (x.size, p.size):
            raise InvalidInput(f"values shape {vals.shape} does not match axes ({x.size}, {p.size})")
        if not np.all(np.isfinite(vals)):
            raise InvalidInput("Wigner values must be finite")
        if not self.hbar > 0:
            raise NonPositiveParameter("hbar must be positive")
        if self.norm_tol is not None and abs(self.norm - 1.0) > self.norm_tol:
            raise NormalizationError(f"grid norm {self.norm:.12g} differs from 1 by more than {self.norm_tol}")

    @property
    def dx(self) -> float:
        return _uniform_spacing(self.x, "x")

    @property
    def dp(self) -> float:
        return _uniform_spacing(self.p, "p")

    @property
    def norm(self) -> float:
        return float(np.sum(self.values) * self.dx * self.dp)

    @property
    def purity(self) -> float:
        return float(2.0 * math.pi * self.hbar * np.sum(self.values**2) * self.dx * self.dp)

    def marginal_x(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dp

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dx

    def with_values(self, values, norm_tol: Optional[float] = TOL_NORM) -> "GridWignerState":
        return GridWignerState(self.x, self.p, values, self.hbar, norm_tol=norm_tol)


@dataclass(frozen=True)
class DensityMatrixGrid:
    """Density matrix ``rho(x, x')`` sampled on a uniform position grid."""

    x: np.ndarray
    rho: np.ndarray
    norm_tol: Optional[float] = TOL_NORM

    def __post_init__(self):
        x = _frozen(self.x)
        object.__setattr__(self, "x", x)
        self.dx
        rho = _frozen(self.rho, complex)
        object.__setattr__(self, "rho", rho)
        if rho.shape != (x.size, x.size):
            raise InvalidInput("rho must be square and match the x axis")
        scale = max(float(np.max(np.abs(rho))), 1e-300)
        if np.max(np.abs(rho - rho.conj().T)) > TOL_HERMITIAN * scale:
            raise NonHermitian("density matrix is not Hermitian")
        if self.norm_tol is not None and abs(self.trace - 1.0) > self.norm_tol:
            raise NormalizationError(f"trace {self.trace:.12g} differs from 1")

    @property
    def dx(self) -> float:
        return _uniform_spacing(self.x, "x")

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)) * self.dx)

    @property
    def purity(self) -> float:
        return float(np.real(np.sum(self.rho * self.rho.T)) * self.dx**2)

    @classmethod
    def from_wavefunction(cls, x, psi) -> "DensityMatrixGrid":
        psi = np.asarray(psi, dtype=complex)
        return cls(x, np.outer(psi, psi.conj()))


class Moments(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    norm: float


# --- constructors ------------------------------------------------------------

def gaussian_packet(u0: float, p0: float, delta: float, hbar: float = 1.0) -> GaussianWignerState:
    """Minimum-uncertainty packet of position width ``delta`` centred at ``(u0, p0)``."""
    if not delta > 0:
        raise NonPositiveWidth("packet width delta must be positive")
    cov = np.diag([delta**2, hbar**2 / (4.0 * delta**2)])
    return GaussianWignerState(np.array([u0, p0], dtype=float), cov, hbar)


def thermal_oscillator(M: float, omega: float, beta: float, hbar: float = 1.0) -> GaussianWignerState:
    """Equilibrium Wigner function of an oscillator at inverse temperature ``beta``."""
    if not (M > 0 and omega > 0 and beta > 0 and hbar > 0):
        raise NonPositiveParameter("M, omega, beta and hbar must be positive")
    t = math.tanh(0.5 * beta * hbar * omega)
    cov = np.diag([hbar / (2.0 * M * omega * t), M * hbar * omega / (2.0 * t)])
    return GaussianWignerState(np.zeros(2), cov, hbar)


def moments(state: Union[GaussianWignerState, GridWignerState]) -> Moments:
    if isinstance(state, GaussianWignerState):
        return Moments(state.mean.copy(), state.cov.copy(), 1.0)
    w = state.values * state.dx * state.dp
    norm = float(w.sum())
    X, P = np.meshgrid(state.x, state.p, indexing="ij")
    mx, mp = float((w * X).sum() / norm), float((w * P).sum() / norm)
    dX, dP = X - mx, P - mp
    cxx = float((w * dX * dX).sum() / norm)
    cxp = float((w * dX * dP).sum() / norm)
    cpp = float((w * dP * dP).sum() / norm)
    return Moments(np.array([mx, mp]), np.array([[cxx, cxp], [cxp, cpp]]), norm)


def check_admissible(state: GridWignerState) -> None:
    """Reject grids that cannot be Wigner functions (purity above one, or moments below the uncertainty bound)."""
    if state.purity > 1.0 + PURITY_SLACK:
        raise InadmissibleState(f"purity {state.purity:.6g} exceeds 1: state is sharper than quantum mechanics allows")
    mom = moments(state)
    det = float(np.linalg.det(mom.cov))
    if det < (state.hbar / 2) ** 2 * (1.0 - 1e-6):
        raise InadmissibleState(f"covariance determinant {det:.6g} below (hbar/2)^2")


# --- Weyl pair ---------------------------------------------------------------

def momentum_band(dx: float, hbar: float = 1.0) -> float:
    """Half-width of the alias-free momentum band for position spacing ``dx``."""
    return math.pi * hbar / (2.0 * dx)


def full_band_axis(dx: float, n_p: int, hbar: float = 1.0) -> np.ndarray:
    """Momentum axis covering one band with ``n_p`` nodes; the Weyl pair is exact on it."""
    width = 2.0 * momentum_band(dx, hbar)
    return -0.5 * width + width * np.arange(n_p) / n_p


def _pair_indices(n: int):
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return a, b, a + b, a - b + (n - 1)


def weyl_to_wigner(rho: DensityMatrixGrid, p_axis=None, hbar: float = 1.0) -> GridWignerState:
    """``f(x, p) = int rho(x + xi/2, x - xi/2) exp(-i p xi / hbar) dxi / (2 pi hbar)``.

    The result lives on the half-spacing x lattice (``2n - 1`` nodes). With
    ``p_axis=None`` a full-band axis of ``n`` nodes is used.
    """
    n = rho.x.size
    dx = rho.dx
    if p_axis is None:
        p_axis = full_band_axis(dx, n, hbar)
    p_axis = np.asarray(p_axis, dtype=float)
    _uniform_spacing(p_axis, "p")
    band = momentum_band(dx, hbar)
    if np.max(np.abs(p_axis)) > band * (1.0 + 1e-12):
        raise AliasedGrid(f"momentum axis exceeds the alias-free band |p| <= {band:.6g}")
    a, b, c, k = _pair_indices(n)
    C = np.zeros((2 * n - 1, 2 * n - 1), dtype=complex)
    C[c, k] = rho.rho[a, b]
    sep = (np.arange(2 * n - 1) - (n - 1)) * dx
    E = np.exp(-1j * np.outer(sep, p_axis) / hbar)
    # separations at fixed centre are spaced 2 dx
    f = (C @ E) * (2.0 * dx / (2.0 * math.pi * hbar))
    scale = max(float(np.max(np.abs(f.real))), 1e-300)
    if np.max(np.abs(f.imag)) > TOL_REAL * max(scale, 1.0):
        raise NonHermitian("Wigner transform has an imaginary residue; rho is not Hermitian enough")
    x_half = rho.x[0] + 0.5 * dx * np.arange(2 * n - 1)
    return GridWignerState(x_half, p_axis, f.real, hbar)


def wigner_to_weyl(f: GridWignerState, check: bool = True) -> DensityMatrixGrid:
    """``rho(x, x') = int f((x + x')/2, p) exp(i p (x - x') / hbar) dp`` on every other x node."""
    if check:
        check_admissible(f)
    if f.x.size % 2 == 0:
        raise InvalidInput("wigner_to_weyl needs an odd number of x nodes (half-spacing lattice)")
    n = (f.x.size + 1) // 2
    dx = 2.0 * f.dx
    sep = (np.arange(2 * n - 1) - (n - 1)) * dx
    G = (f.values @ np.exp(1j * np.outer(f.p, sep) / f.hbar)) * f.dp
    a, b, c, k = _pair_indices(n)
    rho = G[c, k]
    scale = max(float(np.max(np.abs(rho))), 1e-300)
    if np.max(np.abs(rho - rho.conj().T)) > TOL_RESYMMETRIZE * scale:
        raise NonHermitian("reconstructed density matrix is not Hermitian")
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrixGrid(f.x[::2], rho)
