"""Influence phases of harmonic environments on a pair of discretized paths.

Conventions: the influence functional is ``F = exp(i Phi / hbar)``; ``Phi`` has
action units. With ``g(t) = gamma(x_t) - gamma(x'_t)`` and
``s(t) = gamma(x_t) + gamma(x'_t)``, one oscillator contributes a
self-interaction ``(1/2 M w) iint_{s<t} s(s) g(t) sin w(t - s)`` plus a term
set by its initial Wigner function.

Time integrals use the trapezoid rule. The triangle ``s < t`` keeps half
weight on the diagonal and on the ``s = t_a`` edge.

Two evaluation routes exist on purpose. ``phase_single_general`` factorizes
the kernels and evaluates the initial-state average as a characteristic
function. The closed forms (``phase_gaussian_packet``, ``phase_vacuum``,
``phase_thermal``) assemble the double integrals as explicit kernel matrices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.integrate import cumulative_trapezoid

from .errors import (
    DivergentIntegral,
    GridMismatch,
    InadmissibleState,
    InvalidInput,
    NonPositiveParameter,
    NonPositiveWidth,
    NonUniformGrid,
    NumericalFailure,
    QuadratureUnderflow,
)
from .states import GaussianWignerState, GridWignerState, check_admissible, gaussian_packet, thermal_oscillator

IM_FLOOR = 1e-10


class InadmissibleInitialState(InadmissibleState):
    pass


@dataclass(frozen=True)
class PathPair:
    """Forward and backward paths ``x(t)``, ``x'(t)`` on a uniform time grid."""

    times: np.ndarray
    x: np.ndarray
    x_prime: np.ndarray

    def __post_init__(self):
        for name in ("times", "x", "x_prime"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        n = self.times.size
        if n < 2 or self.x.shape != (n,) or self.x_prime.shape != (n,):
            raise InvalidInput("paths need equal lengths of at least two nodes")
        steps = np.diff(self.times)
        if not (steps[0] > 0 and np.max(np.abs(steps - steps[0])) <= 1e-9 * steps[0]):
            raise NonUniformGrid("path times must be uniform and increasing")

    @classmethod
    def on_grid(cls, t_a: float, t_b: float, x, x_prime) -> "PathPair":
        return cls(np.linspace(t_a, t_b, len(x)), x, x_prime)

    @property
    def dt(self) -> float:
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def swapped(self) -> "PathPair":
        return PathPair(self.times, self.x_prime, self.x)


@dataclass(frozen=True)
class Coupling:
    """Interaction energy ``u * gamma(x)``; bilinear when ``strength`` is set."""

    strength: Optional[float] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if (self.strength is None) == (self.func is None):
            raise InvalidInput("give exactly one of strength or func")

    @property
    def bilinear(self) -> bool:
        return self.strength is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.strength * x if self.bilinear else np.asarray(self.func(x), dtype=float)
        if not np.all(np.isfinite(out)):
            raise InvalidInput("coupling is not finite on the path range")
        return out


@dataclass(frozen=True)
class PacketParams:
    u0: float
    p0: float
    delta: float


@dataclass(frozen=True)
class Thermal:
    beta: float


@dataclass(frozen=True)
class Vacuum:
    pass


InitialState = Union[GaussianWignerState, GridWignerState, PacketParams, Thermal, Vacuum]


@dataclass(frozen=True)
class OscillatorSpec:
    M: float
    omega: float
    coupling: Coupling
    initial: InitialState = field(default_factory=Vacuum)

    def __post_init__(self):
        if not (self.M > 0 and self.omega > 0):
            raise NonPositiveParameter("oscillator mass and frequency must be positive")


@dataclass(frozen=True)
class InfluencePhase:
    value: complex
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        if not np.isfinite(self.value):
            raise NumericalFailure("influence phase is not finite")
        if self.value.imag < -IM_FLOOR * max(1.0, abs(self.value)):
            raise NumericalFailure(f"Im Phi = {self.value.imag:.3e} < 0 would amplify the functional")

    @property
    def re(self) -> float:
        return self.value.real

    @property
    def im(self) -> float:
        return self.value.imag

    @property
    def functional(self) -> complex:
        return complex(np.exp(1j * self.value / self.hbar))

    @property
    def abs_F(self) -> float:
        return math.exp(-self.value.imag / self.hbar)

    def __add__(self, other: "InfluencePhase") -> "InfluencePhase":
        return InfluencePhase(self.value + other.value, self.hbar)


# --- quadrature helpers ------------------------------------------------------

def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def triangle_weights(n: int, h: float) -> np.ndarray:
    """``L[i, j]`` so that ``sum_j L[i, j] F_j`` is the trapezoid rule on ``[t_0, t_i]``."""
    L = np.tril(np.full((n, n), h))
    L[:, 0] = 0.5 * h
    L[np.arange(n), np.arange(n)] = 0.5 * h
    L[0, 0] = 0.0
    return L


def _sum_diff(paths: PathPair, coupling: Coupling):
    gx, gxp = coupling(paths.x), coupling(paths.x_prime)
    return gx + gxp, gx - gxp


def _initial_gaussian(osc: OscillatorSpec, hbar: float) -> Optional[GaussianWignerState]:
    init = osc.initial
    if isinstance(init, GaussianWignerState):
        if not math.isclose(init.hbar, hbar, rel_tol=1e-12):
            raise InvalidInput("initial state hbar differs from the requested hbar")
        return init
    if isinstance(init, PacketParams):
        return gaussian_packet(init.u0, init.p0, init.delta, hbar)
    if isinstance(init, Thermal):
        return thermal_oscillator(osc.M, osc.omega, init.beta, hbar)
    if isinstance(init, Vacuum):
        return gaussian_packet(0.0, 0.0, math.sqrt(hbar / (2.0 * osc.M * osc.omega)), hbar)
    return None


# --- general route -----------------------------------------------------------

def self_interaction(paths: PathPair, osc: OscillatorSpec) -> float:
    """State-independent real term, via cumulative integrals of the factorized sine kernel."""
    s, g = _sum_diff(paths, osc.coupling)
    w = osc.omega
    tau = paths.times - paths.times[0]
    cs = cumulative_trapezoid(s * np.cos(w * tau), dx=paths.dt, initial=0.0)
    sn = cumulative_trapezoid(s * np.sin(w * tau), dx=paths.dt, initial=0.0)
    inner = np.sin(w * tau) * cs - np.cos(w * tau) * sn
    wt = trapezoid_weights(paths.times.size, paths.dt)
    return float(np.dot(wt, g * inner) / (2.0 * osc.M * w))


def drive_vector(paths: PathPair, osc: OscillatorSpec) -> np.ndarray:
    """``(int g cos w(t - t_a), int g sin w(t - t_a) / (M w))``; the average's phase-space frequency times hbar."""
    _, g = _sum_diff(paths, osc.coupling)
    tau = paths.times - paths.times[0]
    wt = trapezoid_weights(paths.times.size, paths.dt)
    jc = float(np.dot(wt, g * np.cos(osc.omega * tau)))
    js = float(np.dot(wt, g * np.sin(osc.omega * tau)))
    return np.array([jc, js / (osc.M * osc.omega)])


def log_expectation(initial: Union[GaussianWignerState, GridWignerState], v: np.ndarray, hbar: float) -> complex:
    """``log iint f(u, p) exp(-i (u v0 + p v1) / hbar) du dp``."""
    if isinstance(initial, GaussianWignerState):
        k = v / hbar
        return complex(-1j * float(k @ initial.mean) - 0.5 * float(k @ initial.cov @ k))
    U, P = np.meshgrid(initial.x, initial.p, indexing="ij")
    phase = -(U * v[0] + P * v[1]) / hbar
    weights = np.asarray(initial.values) * initial.dx * initial.dp
    re = math.fsum((weights * np.cos(phase)).ravel())
    im = math.fsum((weights * np.sin(phase)).ravel())
    mag = math.hypot(re, im)
    if mag < 1e-300:
        raise QuadratureUnderflow("initial-state average underflows; log undefined")
    return complex(math.log(mag), math.atan2(im, re))


def phase_single_general(paths: PathPair, osc: OscillatorSpec, hbar: float = 1.0) -> InfluencePhase:
    """Influence phase of one oscillator with an arbitrary admissible initial Wigner function."""
    init = _initial_gaussian(osc, hbar)
    if init is None:
        init = osc.initial
        if not isinstance(init, GridWignerState):
            raise InvalidInput(f"unsupported initial state {type(init).__name__}")
        try:
            check_admissible(init)
        except InadmissibleState as exc:
            raise InadmissibleInitialState(str(exc)) from exc
    phi = self_interaction(paths, osc) - 1j * hbar * log_expectation(init, drive_vector(paths, osc), hbar)
    return InfluencePhase(phi, hbar)


# --- closed forms ------------------------------------------------------------

def _kernel_terms(paths: PathPair, osc: OscillatorSpec):
    s, g = _sum_diff(paths, osc.coupling)
    n, h = paths.times.size, paths.dt
    tau = paths.times - paths.times[0]
    w = osc.omega
    wt = trapezoid_weights(n, h)
    diff = tau[:, None] - tau[None, :]
    tri = triangle_weights(n, h) * np.sin(w * diff)
    re_self = float((wt * g) @ tri @ s) / (2.0 * osc.M * w)
    wg = wt * g
    return re_self, wg, tau, diff


def _vacuum_square(wg, diff, w) -> float:
    return float(wg @ np.cos(w * diff) @ wg)


def phase_vacuum(paths: PathPair, osc: OscillatorSpec, hbar: float = 1.0) -> InfluencePhase:
    re_self, wg, _, diff = _kernel_terms(paths, osc)
    im = _vacuum_square(wg, diff, osc.omega) / (4.0 * osc.M * osc.omega)
    return InfluencePhase(complex(re_self, im), hbar)


def phase_thermal(paths: PathPair, osc: OscillatorSpec, hbar: float = 1.0,
                  beta: Optional[float] = None) -> InfluencePhase:
    if beta is None:
        if not isinstance(osc.initial, Thermal):
            raise InvalidInput("phase_thermal needs a Thermal initial state or an explicit beta")
        beta = osc.initial.beta
    if not beta > 0:
        raise NonPositiveParameter("beta must be positive")
    re_self, wg, _, diff = _kernel_terms(paths, osc)
    coth = 1.0 / math.tanh(0.5 * beta * hbar * osc.omega)
    im = coth * (_vacuum_square(wg, diff, osc.omega) / (4.0 * osc.M * osc.omega))
    return InfluencePhase(complex(re_self, im), hbar)


def phase_gaussian_packet(paths: PathPair, osc: OscillatorSpec, hbar: float = 1.0) -> InfluencePhase:
    """Four-term closed form for an initial Gaussian packet ``(u0, p0, delta)``."""
    pk = osc.initial
    if not isinstance(pk, PacketParams):
        raise InvalidInput("phase_gaussian_packet needs PacketParams as the initial state")
    if not pk.delta > 0:
        raise NonPositiveWidth("packet width delta must be positive")
    M, w = osc.M, osc.omega
    re_self, wg, tau, diff = _kernel_terms(paths, osc)
    drive_u = -pk.u0 * float(np.sum(wg * np.cos(w * tau)))
    drive_p = -pk.p0 / (M * w) * float(np.sum(wg * np.sin(w * tau)))
    d2 = pk.delta**2
    squeeze = hbar**2 / (4.0 * d2 * M**2 * w**2)
    kern = (d2 + squeeze) * np.cos(w * diff) + (d2 - squeeze) * np.cos(w * (tau[:, None] + tau[None, :]))
    im = float(wg @ kern @ wg) / (4.0 * hbar)
    return InfluencePhase(complex(re_self + drive_u + drive_p, im), hbar)


def phase_oscillator(paths: PathPair, osc: OscillatorSpec, hbar: float = 1.0) -> InfluencePhase:
    """Dispatch on the initial-state tag to the matching closed form, else the general route."""
    init = osc.initial
    if isinstance(init, Vacuum):
        return phase_vacuum(paths, osc, hbar)
    if isinstance(init, Thermal):
        return phase_thermal(paths, osc, hbar)
    if isinstance(init, PacketParams):
        return phase_gaussian_packet(paths, osc, hbar)
    return phase_single_general(paths, osc, hbar)


def phase_collection(paths: PathPair, oscillators: Sequence[OscillatorSpec], hbar: float = 1.0) -> InfluencePhase:
    """Independent oscillators: phases add (functionals multiply)."""
    total = InfluencePhase(0.0, hbar)
    for osc in oscillators:
        total = total + phase_oscillator(paths, osc, hbar)
    return total


# --- continuum bath ----------------------------------------------------------

def _z_coth_z(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z * z / 3.0, safe / np.tanh(safe))


@dataclass(frozen=True)
class SpectralDensity:
    """Bath weight ``Gamma(w) = sum_j gamma_j**2 / (M_j w_j) delta(w - w_j)`` or its continuum limit.

    ``lines`` holds discrete oscillators as ``(w_j, gamma_j**2 / (M_j w_j))``.
    ``ohmic`` is ``(2 eta / pi) w`` times a cutoff, normalized so that the
    friction kernel tends to ``-2 eta delta'(t)`` and the high-temperature noise
    kernel to ``eta k T delta(t)``. ``sampled`` is a tabulated continuous
    density, linearly interpolated and zero outside the table.
    """

    kind: str
    omegas: tuple = ()
    values: tuple = ()
    eta: float = 0.0
    cutoff: Optional[float] = None
    shape: str = "exponential"

    def __post_init__(self):
        if self.kind == "ohmic":
            if not self.eta > 0:
                raise NonPositiveParameter("ohmic eta must be positive")
            if self.cutoff is None or not (0 < self.cutoff < math.inf):
                raise DivergentIntegral("ohmic density needs a finite cutoff frequency")
            if self.shape not in ("exponential", "sharp"):
                raise InvalidInput(f"unknown cutoff shape {self.shape!r}")
        elif self.kind in ("lines", "sampled"):
            w, v = np.asarray(self.omegas, dtype=float), np.asarray(self.values, dtype=float)
            if w.size == 0 or w.shape != v.shape:
                raise InvalidInput("spectral table needs matching, non-empty omega and value lists")
            if np.any(v < 0) or np.any(w <= 0) or not np.all(np.isfinite(v)):
                raise InvalidInput("spectral weights must be finite and non-negative at positive frequencies")
            if self.kind == "sampled" and np.any(np.diff(w) <= 0):
                raise InvalidInput("sampled frequencies must increase")
        else:
            raise InvalidInput(f"unknown spectral density kind {self.kind!r}")

    @classmethod
    def lines(cls, omegas, weights) -> "SpectralDensity":
        return cls("lines", tuple(map(float, omegas)), tuple(map(float, weights)))

    @classmethod
    def from_oscillators(cls, oscillators: Sequence[OscillatorSpec]) -> "SpectralDensity":
        for o in oscillators:
            if not o.coupling.bilinear:
                raise InvalidInput("continuum kernels need bilinear couplings")
        return cls.lines([o.omega for o in oscillators], [o.coupling.strength**2 / (o.M * o.omega) for o in oscillators])

    @classmethod
    def ohmic(cls, eta: float, cutoff: float, shape: str = "exponential") -> "SpectralDensity":
        return cls("ohmic", eta=float(eta), cutoff=None if cutoff is None else float(cutoff), shape=shape)

    @classmethod
    def sampled(cls, omegas, values) -> "SpectralDensity":
        return cls("sampled", tuple(map(float, omegas)), tuple(map(float, values)))

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "ohmic":
            return (2.0 * self.eta / math.pi) * w * self._cut(w)
        if self.kind == "sampled":
            return np.interp(w, self.omegas, self.values, left=0.0, right=0.0)
        raise InvalidInput("a line spectrum has no pointwise density")

    def _cut(self, w):
        if self.shape == "exponential":
            return np.exp(-w / self.cutoff)
        return (w <= self.cutoff).astype(float)

    def to_json(self) -> dict:
        if self.kind == "ohmic":
            return {"ohmic": {"eta": self.eta, "cutoff": self.cutoff, "shape": self.shape}}
        return {self.kind: [[w, v] for w, v in zip(self.omegas, self.values)]}

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralDensity":
        if "ohmic" in obj:
            o = obj["ohmic"]
            return cls.ohmic(o["eta"], o.get("cutoff"), o.get("shape", "exponential"))
        for kind in ("lines", "sampled"):
            if kind in obj:
                pairs = np.asarray(obj[kind], dtype=float).reshape(-1, 2)
                return cls(kind, tuple(pairs[:, 0]), tuple(pairs[:, 1]))
        raise InvalidInput(f"cannot parse spectral density {obj!r}")


ANTIDERIVATIVES = ("A1", "A2", "A3", "A4", "R1", "R2", "R3", "R4")


@dataclass(frozen=True)
class MemoryKernels:
    """Friction kernel ``A(t)`` and noise kernel ``R(t)`` sampled on ``[0, t_max]``.

    ``A1 .. A4`` and ``R1 .. R4`` are optional repeated time antiderivatives
    (``A1(t) = int_0^t A``, ``A2(t) = int_0^t A1``, ...). When present,
    ``phase_continuum`` integrates the kernels exactly against piecewise-linear
    paths, which stays accurate for kernels much narrower than the path spacing.
    """

    times: np.ndarray
    A: np.ndarray
    R: np.ndarray
    A1: Optional[np.ndarray] = None
    A2: Optional[np.ndarray] = None
    A3: Optional[np.ndarray] = None
    A4: Optional[np.ndarray] = None
    R1: Optional[np.ndarray] = None
    R2: Optional[np.ndarray] = None
    R3: Optional[np.ndarray] = None
    R4: Optional[np.ndarray] = None

    def __post_init__(self):
        n = np.asarray(self.times).size
        for name in ("times", "A", "R") + ANTIDERIVATIVES:
            a = getattr(self, name)
            if a is None:
                continue
            a = np.array(a, dtype=float)
            if a.shape != (n,) or not np.all(np.isfinite(a)):
                raise InvalidInput(f"kernel column {name} must be finite with {n} samples")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if n < 2 or self.times[0] != 0.0:
            raise InvalidInput("kernel grid must start at t = 0 with at least two samples")
        steps = np.diff(self.times)
        if not (steps[0] > 0 and np.max(np.abs(steps - steps[0])) <= 1e-9 * steps[0]):
            raise NonUniformGrid("kernel times must be uniform")

    @property
    def dt(self) -> float:
        return float(self.times[-1] / (self.times.size - 1))

    @property
    def has_antiderivatives(self) -> bool:
        return all(getattr(self, k) is not None for k in ANTIDERIVATIVES)

    def R_at(self, t):
        """Even extension of the noise kernel."""
        return np.interp(np.abs(t), self.times, self.R)

    def A_at(self, t):
        """Odd extension of the friction kernel."""
        t = np.asarray(t, dtype=float)
        return np.sign(t) * np.interp(np.abs(t), self.times, self.A)


def _density_slope(sd: SpectralDensity) -> float:
    """``lim_{w -> 0} Gamma(w) / w``."""
    if sd.kind == "ohmic":
        return 2.0 * sd.eta / math.pi
    w0, v0 = sd.omegas[0], sd.values[0]
    return v0 / w0


def _line_kernels(sd: SpectralDensity, t: np.ndarray, beta: float, hbar: float) -> MemoryKernels:
    w = np.asarray(sd.omegas)
    v = np.asarray(sd.values)
    f = 0.25 * hbar * v / np.tanh(0.5 * beta * hbar * w)
    y = np.outer(t, w)
    A = np.sin(y) @ v
    A[0] = 0.0
    cols = {}
    for k in range(1, 5):
        tk = t[:, None] ** k
        cols[f"A{k}"] = (tk * y * _taylor_rest(y, k + 1)) @ v
        cols[f"R{k}"] = (tk * _taylor_rest(y, k)) @ f
    return MemoryKernels(t, A, np.cos(y) @ f, **cols)


_REST_TERMS = 12
_REST_COEF = {m: [1.0 / math.factorial(2 * k + m) for k in range(_REST_TERMS)] for m in range(1, 6)}
_REST_CLOSED = {
    1: lambda y: np.sin(y) / y,
    2: lambda y: (1.0 - np.cos(y)) / y**2,
    3: lambda y: (y - np.sin(y)) / y**3,
    4: lambda y: (np.cos(y) - 1.0 + 0.5 * y**2) / y**4,
    5: lambda y: (np.sin(y) - y + y**3 / 6.0) / y**5,
}


def _taylor_rest(y, m: int):
    """``sum_k (-1)^k y^(2k) / (2k + m)!``, i.e. the Taylor remainder of sin or cos over ``y^m``.

    Below ``|y| = 1`` the series is summed directly; the closed forms cancel badly there.
    """
    y = np.asarray(y, dtype=float)
    y2 = y * y
    series = np.zeros_like(y)
    for c in reversed(_REST_COEF[m]):
        series = c - y2 * series
    small = np.abs(y) < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = _REST_CLOSED[m](np.where(small, 1.0, y))
    return np.where(small, series, closed)


def _taylor_rest_scalar(y: float, m: int) -> float:
    if abs(y) < 1.0:
        y2, acc = y * y, 0.0
        for c in reversed(_REST_COEF[m]):
            acc = c - y2 * acc
        return acc
    return _REST_CLOSED_SCALAR[m](y)


_REST_CLOSED_SCALAR = {
    1: lambda y: math.sin(y) / y,
    2: lambda y: (1.0 - math.cos(y)) / (y * y),
    3: lambda y: (y - math.sin(y)) / y**3,
    4: lambda y: (math.cos(y) - 1.0 + 0.5 * y * y) / y**4,
    5: lambda y: (math.sin(y) - y + y**3 / 6.0) / y**5,
}


def kernels_from_spectral_density(sd: SpectralDensity, beta: float, hbar: float, t_max: float, n_t: int,
                                  epsrel: float = 1e-10) -> MemoryKernels:
    """``A(t) = int Gamma sin(w t) dw`` and ``R(t) = int (hbar Gamma / 4) coth(beta hbar w / 2) cos(w t) dw``.

    Continuous densities are integrated on ``[0, w_max]`` with adaptive
    oscillatory quadrature; ``w_max`` is the table end, the sharp cutoff, or
    50 cutoff frequencies for the exponential shape. Antiderivatives come from
    the same transforms with the time integral done analytically, split at
    ``w_1 = pi / t`` so that every integrand stays regular at ``w = 0``.
    """
    if not (beta > 0 and hbar > 0):
        raise NonPositiveParameter("beta and hbar must be positive")
    if not (t_max > 0 and n_t >= 2):
        raise InvalidInput("need t_max > 0 and n_t >= 2")
    t = np.linspace(0.0, t_max, n_t)
    if sd.kind == "lines":
        return _line_kernels(sd, t, beta, hbar)

    half = 0.5 * beta * hbar
    slope = _density_slope(sd)
    if sd.kind == "ohmic" and sd.shape == "exponential":
        inv_c = 1.0 / sd.cutoff

        def gw(w):
            return slope * math.exp(-w * inv_c)
    else:
        def gw(w):
            # Gamma(w) / w, regular at the origin
            return float(sd(w)) / w if w > 0 else slope

    def noise(w):
        # (hbar / 4) Gamma(w) coth(beta hbar w / 2) = (Gamma / w) (z coth z) / (2 beta)
        z = half * w
        zc = 1.0 + z * z / 3.0 if z < 1e-6 else z / math.tanh(z)
        return gw(w) * zc / (2.0 * beta)

    if sd.kind == "ohmic":
        hi = sd.cutoff * (50.0 if sd.shape == "exponential" else 1.0)
    else:
        hi = sd.omegas[-1]
    G0 = _quad(gw, 0.0, hi, epsrel)
    F0 = _quad(noise, 0.0, hi, epsrel)
    if not (np.isfinite(G0) and np.isfinite(F0)):
        raise DivergentIntegral("spectral integrals do not converge for this cutoff")

    # split points w1 = pi / t decrease with t; non-oscillatory tails over
    # [w1, hi] accumulate segment by segment
    w1s = np.minimum(hi, math.pi / t[1:])
    tail_fns = {
        "g0": gw,
        "g2": lambda w: gw(w) / (w * w),
        "f2": lambda w: noise(w) / (w * w),
        "f4": lambda w: noise(w) / w**4,
    }
    tails = {k: np.zeros_like(w1s) for k in tail_fns}
    upper, acc = hi, dict.fromkeys(tail_fns, 0.0)
    for i, w1 in enumerate(w1s):
        for k, fn in tail_fns.items():
            acc[k] += _quad(fn, w1, upper, epsrel)
            tails[k][i] = acc[k]
        upper = w1

    rest = _taylor_rest_scalar
    out = {k: np.zeros(n_t) for k in ("A", "R") + ANTIDERIVATIVES}
    out["R"][0] = F0
    for i, ti in enumerate(t[1:], start=1):
        w1 = w1s[i - 1]
        # regular integrands on [0, w1]; y = w t stays below pi
        low = dict(
            A1=lambda w: gw(w) * (w * ti) ** 2 * rest(w * ti, 2),
            A2=lambda w: gw(w) * ti * (w * ti) ** 2 * rest(w * ti, 3),
            A3=lambda w: gw(w) * ti**2 * (w * ti) ** 2 * rest(w * ti, 4),
            A4=lambda w: gw(w) * ti**3 * (w * ti) ** 2 * rest(w * ti, 5),
            R1=lambda w: noise(w) * ti * rest(w * ti, 1),
            R2=lambda w: noise(w) * ti**2 * rest(w * ti, 2),
            R3=lambda w: noise(w) * ti**3 * rest(w * ti, 3),
            R4=lambda w: noise(w) * ti**4 * rest(w * ti, 4),
        )
        vals = {k: _quad(f, 0.0, w1, epsrel) for k, f in low.items()}
        out["A"][i] = _quad(lambda w: gw(w) * w, 0.0, hi, epsrel, "sin", ti, G0 * hi)
        out["R"][i] = _quad(noise, 0.0, hi, epsrel, "cos", ti, F0)
        if w1 < hi:
            g0, g2, f2, f4 = (tails[k][i - 1] for k in ("g0", "g2", "f2", "f4"))
            vals["A1"] += g0 - _quad(gw, w1, hi, epsrel, "cos", ti, G0)
            vals["A2"] += ti * g0 - _quad(lambda w: gw(w) / w, w1, hi, epsrel, "sin", ti, G0 * ti)
            vals["A3"] += (0.5 * ti**2 * g0 - g2
                           + _quad(lambda w: gw(w) / w**2, w1, hi, epsrel, "cos", ti, G0 * ti**2))
            vals["A4"] += (ti**3 / 6.0 * g0 - ti * g2
                           + _quad(lambda w: gw(w) / w**3, w1, hi, epsrel, "sin", ti, G0 * ti**3))
            vals["R1"] += _quad(lambda w: noise(w) / w, w1, hi, epsrel, "sin", ti, F0 * ti)
            vals["R2"] += f2 - _quad(lambda w: noise(w) / (w * w), w1, hi, epsrel, "cos", ti, F0 * ti**2)
            vals["R3"] += ti * f2 - _quad(lambda w: noise(w) / w**3, w1, hi, epsrel, "sin", ti, F0 * ti**3)
            vals["R4"] += (0.5 * ti**2 * f2 - f4
                           + _quad(lambda w: noise(w) / w**4, w1, hi, epsrel, "cos", ti, F0 * ti**4))
        for k, v in vals.items():
            out[k][i] = v
    return MemoryKernels(t, **out)


def _quad(f, a, b, epsrel, weight=None, wvar=None, scale=None) -> float:
    if b <= a:
        return 0.0
    epsabs = 0.0 if scale is None else 1e-14 * abs(scale)
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=5000)
    if weight is not None:
        kw.update(weight=weight, wvar=wvar)
    else:
        # geometric breakpoints so that peaks near the lower end are resolved
        if a > 0 and b / a > 10.0:
            kw.update(points=np.geomspace(a, b, int(np.log10(b / a)) * 4 + 2)[1:-1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, **kw)
    return float(val)


def _lag_table(values: np.ndarray, step: int, n: int, parity: int, causal: bool) -> np.ndarray:
    """Samples at path lags ``k = -(n-1) .. n-1``; negative lags by parity, or zero when causal."""
    k = np.arange(-(n - 1), n)
    out = values[np.abs(k) * step] * np.where(k < 0, parity, 1)
    return np.where(k > 0, out, 0.0) if causal else out


def _hat_terms(n: int, h: float):
    """Second derivatives of the path hat functions as point terms.

    Node ``i`` maps to three ``(position, order, coefficient)`` triples with
    ``position`` in units of ``h`` and ``order`` 0 for a delta, 1 for its
    derivative. The end nodes are half hats and carry a jump.
    """
    i = np.arange(n)
    pos = np.stack([i - 1, i, i + 1], axis=1)
    order = np.zeros((n, 3), dtype=int)
    coef = np.tile([1.0 / h, -2.0 / h, 1.0 / h], (n, 1))
    pos[0], order[0], coef[0] = (0, 0, 1), (1, 0, 0), (1.0, -1.0 / h, 1.0 / h)
    pos[-1], order[-1], coef[-1] = (n - 2, n - 1, n - 1), (0, 0, 1), (1.0 / h, -1.0 / h, -1.0)
    return pos, order, coef


def _galerkin_matrix(K2, K3, K4, step: int, n: int, h: float, causal: bool) -> np.ndarray:
    """``W[i, j] = iint phi_i(t) phi_j(s) K(t - s) dt ds`` over the path interval.

    ``phi_i`` are the piecewise-linear hat functions of the path nodes and
    ``K2 .. K4`` the second to fourth antiderivatives of an even kernel, or of
    a kernel restricted to ``t > s`` when ``causal``. Four integrations by
    parts move all derivatives onto the hats, whose second derivatives are
    point masses, so every entry is a short sum of antiderivative samples.
    """
    tabs = np.stack([_lag_table(K, step, n, parity, causal)
                     for K, parity in ((K2, 1), (K3, -1), (K4, 1))])
    off = n - 1
    W = np.zeros((n, n))
    if n > 2:
        # interior hats: fourth central difference of K4
        T4 = tabs[2]
        k = np.arange(-(n - 3), n - 2) + off
        d4 = (T4[k - 2] - 4.0 * T4[k - 1] + 6.0 * T4[k] - 4.0 * T4[k + 1] + T4[k + 2]) / h**2
        lag = np.arange(n)[:, None] - np.arange(n)[None, :]
        inner = slice(1, n - 1)
        W[inner, inner] = d4[lag[inner, inner] + (n - 3)]
    pos, order, coef = _hat_terms(n, h)

    def block(rows, cols):
        L = pos[rows][:, None, :, None] - pos[cols][None, :, None, :]
        p, q = order[rows][:, None, :, None], order[cols][None, :, None, :]
        vals = tabs[2 - p - q, L + off] * np.where(p == 1, -1.0, 1.0)
        return np.einsum("ia,jb,ijab->ij", coef[rows], coef[cols], vals)

    ends = [0, n - 1]
    W[ends, :] = block(ends, np.arange(n))
    W[:, ends] = block(np.arange(n), ends)
    return W


def phase_continuum(paths: PathPair, kernels: MemoryKernels, hbar: float = 1.0,
                    scheme: str = "auto") -> InfluencePhase:
    """Equilibrium bath phase for bilinear coupling, from sampled kernels.

    ``Re = (1/2) iint_{s<t} A(t - s) (x_s + x'_s)(x_t - x'_t)`` and
    ``Im = (1/hbar) iint R(t - s)(x_t - x'_t)(x_s - x'_s)``.

    ``scheme="trapezoid"`` samples the kernels at path lags, matching the
    discrete oscillator formulas node for node. ``scheme="product"`` treats the
    paths as piecewise linear and integrates both time variables exactly
    against the kernels, using their antiderivatives up to fourth order.
    ``"auto"`` picks ``product`` when antiderivatives are available.
    """
    ratio = paths.dt / kernels.dt
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9 * ratio:
        raise GridMismatch("kernel spacing must divide the path spacing")
    n = paths.times.size
    if scheme == "auto":
        scheme = "product" if kernels.has_antiderivatives else "trapezoid"
    if (n - 1) * step > kernels.times.size - 1:
        raise GridMismatch("kernels do not cover the path duration")
    s = paths.x + paths.x_prime
    g = paths.x - paths.x_prime
    h = paths.dt
    wt = trapezoid_weights(n, h)
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    if scheme == "trapezoid":
        lag = np.abs(i - j) * step
        A = np.asarray(kernels.A)[lag]
        R = np.asarray(kernels.R)[lag]
        re = 0.5 * float((wt * g) @ (triangle_weights(n, h) * A) @ s)
        im = float((wt * g) @ R @ (wt * g)) / hbar
        return InfluencePhase(complex(re, im), hbar)
    if scheme != "product":
        raise InvalidInput(f"unknown scheme {scheme!r}")
    if not kernels.has_antiderivatives:
        raise InvalidInput("product scheme needs kernel antiderivatives")
    WR = _galerkin_matrix(kernels.R2, kernels.R3, kernels.R4, step, n, h, causal=False)
    im = float(g @ WR @ g) / hbar
    WA = _galerkin_matrix(kernels.A2, kernels.A3, kernels.A4, step, n, h, causal=True)
    re = 0.5 * float(g @ WA @ s)
    return InfluencePhase(complex(re, im), hbar)
