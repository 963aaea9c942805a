"""Random problem generators shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from wigprop.dynamics import Coefficient, QuadraticPotential
from wigprop.states import GaussianWignerState


def random_potential(rng: np.random.Generator) -> tuple[QuadraticPotential, float, float]:
    """Time-dependent quadratic potential with mild stiffness and drive, plus an interval."""
    m = rng.uniform(0.5, 2.0)
    t_a = rng.uniform(-1.0, 1.0)
    T = rng.uniform(0.3, 1.0)
    c = Coefficient.polynomial([rng.uniform(-0.5, 2.0) * m / 2, rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3)])
    b = Coefficient.polynomial([rng.uniform(-1, 1), rng.uniform(-1, 1)])
    a = Coefficient.constant(rng.uniform(-1, 1))
    return QuadraticPotential(m, a, b, c), t_a, t_a + T


def random_gaussian(rng: np.random.Generator, hbar: float = 1.0) -> GaussianWignerState:
    """Admissible Gaussian, in general mixed and squeezed."""
    sx = rng.uniform(0.3, 1.2)
    sp = rng.uniform(0.3, 1.2)
    r = rng.uniform(-0.6, 0.6)
    cov = np.array([[sx**2, r * sx * sp], [r * sx * sp, sp**2]])
    floor = (hbar / 2) ** 2
    if np.linalg.det(cov) < floor:
        cov *= np.sqrt(floor / np.linalg.det(cov)) * 1.01
    return GaussianWignerState(rng.uniform(-1, 1, 2), cov, hbar)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def smooth_path(rng: np.random.Generator, t: np.ndarray, modes: int = 4, scale: float = 1.0) -> np.ndarray:
    T = t[-1] - t[0]
    tau = (t - t[0]) / T
    out = scale * rng.normal() * np.ones_like(t)
    for k in range(1, modes + 1):
        out += scale * rng.normal() / k * np.sin(k * np.pi * tau + rng.uniform(0, 2 * np.pi))
    return out


def random_path_pair(rng: np.random.Generator, n: int = 101, T: float | None = None):
    from wigprop.influence import PathPair

    T = rng.uniform(0.5, 3.0) if T is None else T
    t = np.linspace(0.0, T, n)
    return PathPair(t, smooth_path(rng, t), smooth_path(rng, t))
