"""Approach of the ohmic noise phase to its white-noise limit.

For smooth random path pairs the ratio ``hbar Im Phi / (eta k T int (x - x')^2 dt)``
is tabulated against the cutoff in units of the path spacing, for both
quadrature schemes, and then against hbar at a fixed cutoff to show the
zero-point contribution that survives at finite hbar.

    python scripts/delta_limit.py --nodes 41 --pairs 3
"""

import argparse

import numpy as np

from wigprop.influence import PathPair, SpectralDensity, kernels_from_spectral_density, phase_continuum


def path_pair(rng, n: int, T: float) -> PathPair:
    t = np.linspace(0.0, T, n)

    def smooth():
        out = rng.normal() * np.ones_like(t)
        for k in range(1, 5):
            out += rng.normal() / k * np.sin(k * np.pi * t / T + rng.uniform(0, 2 * np.pi))
        return out

    return PathPair(t, smooth(), smooth())


def ratio(paths: PathPair, eta: float, T: float, hbar: float, cutoff: float, scheme: str) -> float:
    kern = kernels_from_spectral_density(SpectralDensity.ohmic(eta, cutoff), 1.0 / T, hbar,
                                         paths.duration, paths.times.size)
    g = paths.x - paths.x_prime
    target = eta * T * np.trapezoid(g * g, paths.times)
    return phase_continuum(paths, kern, hbar, scheme=scheme).im * hbar / target


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nodes", type=int, default=41)
    ap.add_argument("--pairs", type=int, default=3)
    ap.add_argument("--eta", type=float, default=0.5)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=6)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    pairs = [path_pair(rng, args.nodes, 1.0) for _ in range(args.pairs)]
    dt = pairs[0].dt
    print("classical regime (hbar = 1e-5): ratio to the white-noise limit")
    print(f"{'w_c dt':>8} " + " ".join(f"{'trap ' + str(i):>9} {'prod ' + str(i):>9}" for i in range(len(pairs))))
    for wdt in (0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0):
        row = []
        for p in pairs:
            row += [ratio(p, args.eta, args.T, 1e-5, wdt / dt, s) for s in ("trapezoid", "product")]
        print(f"{wdt:8.1f} " + " ".join(f"{v:9.5f}" for v in row))
    print("\nproduct scheme at w_c dt = 100 against hbar")
    for hbar in (1e-1, 3e-2, 1e-2, 1e-3, 1e-4):
        row = [ratio(p, args.eta, args.T, hbar, 100.0 / dt, "product") for p in pairs]
        print(f"{hbar:8.0e} " + " ".join(f"{v:9.5f}" for v in row))


if __name__ == "__main__":
    main()
