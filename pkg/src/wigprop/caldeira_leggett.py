"""High-temperature Caldeira-Leggett dynamics of a free particle.

The reduced momentum propagator is an Ornstein-Uhlenbeck kernel: the mean decays
as ``p_a exp(-eta t / m)`` and the variance saturates at ``m k T_b``. The full
``(x, p)`` propagator is sampled with a Langevin ensemble.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize, special, stats

from .errors import (
    EmptyEnsemble,
    InvalidInput,
    NegativeDuration,
    NonPositiveParameter,
    NormalizationError,
    SeedRequired,
    UnstableStep,
)
from .states import GaussianWignerState, GridWignerState

HIGH_T_LIMIT = 0.1
MAX_STEP_RATIO = 0.1
BLOCK_SIZE = 1 << 16
TOL_NORM = 1e-6


class HighTemperatureWarning(UserWarning):
    pass


def worker_count(default: Optional[int] = None) -> int:
    env = os.environ.get("WIGPROP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InvalidInput(f"WIGPROP_THREADS must be an integer, got {env!r}") from exc
    return default or min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class CLParams:
    m: float
    eta: float
    T_b: float
    k: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("m", "eta", "T_b", "k", "hbar"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise NonPositiveParameter(f"{name} must be positive, got {v}")
        if self.quantum_ratio > HIGH_T_LIMIT:
            warnings.warn(
                f"hbar eta / (m k T_b) = {self.quantum_ratio:.3g} > {HIGH_T_LIMIT}; white-noise model is unreliable",
                HighTemperatureWarning,
                stacklevel=3,
            )

    @property
    def tau(self) -> float:
        """Thermalization time ``m / (2 eta)``."""
        return self.m / (2.0 * self.eta)

    @property
    def gamma(self) -> float:
        """Momentum relaxation rate ``eta / m``."""
        return self.eta / self.m

    @property
    def thermal_variance(self) -> float:
        return self.m * self.k * self.T_b

    @property
    def quantum_ratio(self) -> float:
        return self.hbar * self.eta / (self.m * self.k * self.T_b)


def _check_dt(dt: float) -> None:
    if not dt >= 0:
        raise NegativeDuration(f"duration must be non-negative, got {dt}")


@dataclass(frozen=True)
class MomentumKernel:
    mean_factor: float
    variance: float
    dt: float

    def density(self, p_b, p_a):
        """``K(p_b | p_a)``; normalized in ``p_b``. Undefined (a delta) when ``variance == 0``."""
        if self.variance == 0.0:
            raise InvalidInput("zero-duration kernel is a delta function")
        return stats.norm.pdf(p_b, loc=self.mean_factor * np.asarray(p_a), scale=math.sqrt(self.variance))

    def argmax(self, p_a):
        return self.mean_factor * np.asarray(p_a, dtype=float)

    def compose(self, later: "MomentumKernel") -> "MomentumKernel":
        """Kernel of this step followed by ``later``."""
        return MomentumKernel(
            self.mean_factor * later.mean_factor,
            later.mean_factor**2 * self.variance + later.variance,
            self.dt + later.dt,
        )


def momentum_kernel(params: CLParams, dt: float) -> MomentumKernel:
    _check_dt(dt)
    x = params.gamma * dt
    return MomentumKernel(math.exp(-x), params.thermal_variance * -math.expm1(-2.0 * x), float(dt))


def effective_temperature(params: CLParams, dt: float) -> float:
    _check_dt(dt)
    return params.T_b * -math.expm1(-2.0 * params.gamma * dt)


def thermalization_fit(dts: Sequence[float], te_ratio: Sequence[float], sigma: Optional[Sequence[float]] = None) -> float:
    """Least-squares ``tau`` in ``T_e / T_b = 1 - exp(-t / tau)``."""
    dts = np.asarray(dts, dtype=float)
    y = np.asarray(te_ratio, dtype=float)
    guess = float(np.interp(1.0 - math.exp(-1.0), y, dts)) if np.all(np.diff(y) > 0) else float(np.median(dts))
    popt, _ = optimize.curve_fit(lambda t, tau: -np.expm1(-t / tau), dts, y, p0=[max(guess, 1e-12)],
                                 sigma=sigma, absolute_sigma=sigma is not None)
    return float(popt[0])


# --- momentum marginals ------------------------------------------------------

@dataclass(frozen=True)
class GaussianMomentum:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise InvalidInput("variance must be non-negative")

    @classmethod
    def maxwell_boltzmann(cls, params: CLParams) -> "GaussianMomentum":
        return cls(0.0, params.thermal_variance)


@dataclass(frozen=True)
class MomentumGrid:
    p: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        v = np.array(self.values, dtype=float)
        if p.ndim != 1 or p.size < 3 or v.shape != p.shape:
            raise InvalidInput("momentum grid needs matching 1-D axes of at least 3 nodes")
        d = np.diff(p)
        if not (d[0] > 0 and np.max(np.abs(d - d[0])) <= 1e-9 * d[0]):
            raise InvalidInput("momentum grid must be uniform")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "values", v)

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    @property
    def norm(self) -> float:
        return float(np.sum(self.values) * self.dp)

    @classmethod
    def from_gaussian(cls, g: GaussianMomentum, p: np.ndarray) -> "MomentumGrid":
        return cls(p, stats.norm.pdf(p, g.mean, math.sqrt(g.variance)))


def _ramp2(y, sigma: float):
    """Second antiderivative of the centred normal density, ``y Phi(y/s) + s^2 n(y)``."""
    if sigma == 0.0:
        return np.maximum(y, 0.0)
    return y * special.ndtr(y / sigma) + sigma**2 * stats.norm.pdf(y, scale=sigma)


def convolution_matrix(p: np.ndarray, kernel: MomentumKernel) -> np.ndarray:
    """Quadrature matrix with ``f_b(p_i) = sum_j W[i, j] f_a(p_j)``.

    When the kernel is at least two cells wide in ``p_a`` the trapezoid rule on
    the sampled Gaussian is used; it converges exponentially. Narrower kernels
    are integrated exactly against unit hats (piecewise-linear ``f_a`` vanishing
    beyond the grid), which reduces to linear interpolation as the variance
    goes to zero.
    """
    lam = kernel.mean_factor
    sigma = math.sqrt(kernel.variance)
    dp = p[1] - p[0]
    d = p[:, None] - lam * p[None, :]
    if sigma >= 2.0 * lam * dp:
        return dp * stats.norm.pdf(d, scale=sigma)
    w = lam * dp
    return (_ramp2(d + w, sigma) - 2.0 * _ramp2(d, sigma) + _ramp2(d - w, sigma)) / (w * lam)


def propagate_momentum_marginal(f_p: Union[GaussianMomentum, MomentumGrid], params: CLParams, dt: float,
                                norm_tol: float = TOL_NORM):
    kern = momentum_kernel(params, dt)
    if isinstance(f_p, GaussianMomentum):
        return GaussianMomentum(kern.mean_factor * f_p.mean, kern.mean_factor**2 * f_p.variance + kern.variance)
    if not isinstance(f_p, MomentumGrid):
        raise InvalidInput(f"unsupported marginal {type(f_p).__name__}")
    if abs(f_p.norm - 1.0) > norm_tol:
        raise NormalizationError(f"momentum marginal norm {f_p.norm:.8f} differs from 1")
    return MomentumGrid(f_p.p, convolution_matrix(f_p.p, kern) @ f_p.values)


# --- Langevin ensemble -------------------------------------------------------

@dataclass(frozen=True)
class LangevinEnsemble:
    samples: np.ndarray
    initial: np.ndarray
    seed: Optional[int]
    n_steps: int
    dt_step: float
    t_a: float
    t_b: float
    method: str = "exact"

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] != 2 or self.samples.shape[0] < 1:
            raise EmptyEnsemble("ensemble needs at least one (x, p) sample")
        if not np.all(np.isfinite(self.samples)):
            raise UnstableStep("non-finite values in ensemble")

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def p(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def size(self) -> int:
        return self.samples.shape[0]


def _block_stream(seed: Optional[int], block: int) -> np.random.Generator:
    entropy = None if seed is None else [int(seed), block]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _initial_points(initial, n: int, rng: np.random.Generator, start: int) -> np.ndarray:
    if isinstance(initial, GaussianWignerState):
        return rng.multivariate_normal(initial.mean, initial.cov, size=n, method="cholesky")
    pts = np.atleast_2d(np.asarray(initial, dtype=float))
    if pts.shape == (1, 2):
        return np.repeat(pts, n, axis=0)
    return pts[start : start + n].copy()


def _run_block(params: CLParams, initial, n: int, start: int, block: int, seed, n_steps: int,
               dt: float, method: str):
    rng = _block_stream(seed, block)
    z0 = _initial_points(initial, n, rng, start)
    x = z0[:, 0].copy()
    p = z0[:, 1].copy()
    if method == "exact":
        kern = momentum_kernel(params, dt)
        lam, sd = kern.mean_factor, math.sqrt(kern.variance)
    else:
        lam, sd = 1.0 - params.gamma * dt, math.sqrt(2.0 * params.eta * params.k * params.T_b * dt)
    half = 0.5 * dt / params.m
    noise = np.empty(n)
    for _ in range(n_steps):
        rng.standard_normal(out=noise)
        p_new = lam * p + sd * noise
        x += half * (p + p_new)
        p = p_new
    return z0, np.column_stack([x, p])


def langevin_sample(params: CLParams, initial, t_a: float, t_b: float, n_steps: int, n_samples: int,
                    seed: Optional[int], method: str = "exact", reproducible: bool = True,
                    threads: Optional[int] = None) -> LangevinEnsemble:
    """Integrate ``dp = -(eta/m) p dt + sqrt(2 eta k T_b) dW``, ``dx = p/m dt`` for an ensemble.

    ``initial`` is a Gaussian Wigner state, one ``(x, p)`` point, or an
    ``(n_samples, 2)`` array. Samples are generated in fixed blocks, each with
    its own counter-based stream keyed by ``(seed, block)``, so the result does
    not depend on the thread count.
    """
    _check_dt(t_b - t_a)
    if n_steps < 1 or n_samples < 1:
        raise InvalidInput("n_steps and n_samples must be positive")
    if method not in ("exact", "euler"):
        raise InvalidInput(f"unknown stepper {method!r}")
    if seed is None and reproducible:
        raise SeedRequired("reproducible runs need an explicit seed")
    dt = (t_b - t_a) / n_steps
    if params.gamma * dt >= MAX_STEP_RATIO:
        raise UnstableStep(f"eta dt / m = {params.gamma * dt:.3g} >= {MAX_STEP_RATIO}; use more steps")
    if not isinstance(initial, GaussianWignerState):
        pts = np.atleast_2d(np.asarray(initial, dtype=float))
        if pts.shape[1] != 2 or pts.shape[0] not in (1, n_samples):
            raise InvalidInput("point ensemble must be one (x, p) pair or n_samples of them")
    starts = list(range(0, n_samples, BLOCK_SIZE))
    jobs = [(s, min(BLOCK_SIZE, n_samples - s), b) for b, s in enumerate(starts)]

    def work(job):
        s, n, b = job
        return _run_block(params, initial, n, s, b, seed, n_steps, dt, method)

    with ThreadPoolExecutor(max_workers=threads or worker_count()) as pool:
        parts = list(pool.map(work, jobs))
    return LangevinEnsemble(
        samples=np.concatenate([p[1] for p in parts]),
        initial=np.concatenate([p[0] for p in parts]),
        seed=seed,
        n_steps=n_steps,
        dt_step=dt,
        t_a=t_a,
        t_b=t_b,
        method=method,
    )


def ks_distance(momenta: np.ndarray, params: CLParams) -> float:
    """Kolmogorov-Smirnov distance to the Maxwell-Boltzmann law ``N(0, m k T_b)``."""
    if len(momenta) == 0:
        raise EmptyEnsemble("no samples")
    return float(stats.kstest(momenta, stats.norm(0.0, math.sqrt(params.thermal_variance)).cdf).statistic)


def mean_displacement(params: CLParams, p_a: float, dt: float) -> float:
    """``int_0^dt p_a exp(-eta s / m) ds / m``."""
    return p_a * -math.expm1(-params.gamma * dt) / params.eta


# --- histogram estimate ------------------------------------------------------

@dataclass(frozen=True)
class Binning:
    x_range: tuple
    p_range: tuple
    nx: int = 64
    np_: int = 64

    @classmethod
    def auto(cls, ensemble: LangevinEnsemble, nx: int = 64, np_: int = 64, pad: float = 0.05) -> "Binning":
        def rng(v):
            lo, hi = float(v.min()), float(v.max())
            w = hi - lo if hi > lo else 1.0
            return lo - pad * w, hi + pad * w

        return cls(rng(ensemble.x), rng(ensemble.p), nx, np_)


def estimate_phase_space_kernel(ensemble: LangevinEnsemble, binning: Optional[Binning] = None,
                                hbar: float = 1.0) -> GridWignerState:
    """Density histogram of the final ``(x, p)`` samples, normalized over all samples."""
    if ensemble.size == 0:
        raise EmptyEnsemble("ensemble is empty")
    binning = binning or Binning.auto(ensemble)
    counts, xe, pe = np.histogram2d(ensemble.x, ensemble.p, bins=[binning.nx, binning.np_],
                                    range=[binning.x_range, binning.p_range])
    dx, dp = xe[1] - xe[0], pe[1] - pe[0]
    values = counts / (ensemble.size * dx * dp)
    return GridWignerState(0.5 * (xe[1:] + xe[:-1]), 0.5 * (pe[1:] + pe[:-1]), values, hbar, norm_tol=None)


def histogram_p_marginal(hist: GridWignerState) -> np.ndarray:
    return np.asarray(hist.values).sum(axis=0) * hist.dx
