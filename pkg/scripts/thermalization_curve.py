"""Effective-temperature build-up of a Caldeira-Leggett ensemble released from rest.

For each elapsed time the momentum variance of a Langevin ensemble gives
``T_e = <p^2> / (m k)``; the table compares it with the closed form and the
last line fits the relaxation time.

    python scripts/thermalization_curve.py --samples 200000 --threads 4
"""

import argparse
import math
import warnings

import numpy as np

from wigprop.caldeira_leggett import CLParams, effective_temperature, langevin_sample, thermalization_fit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--m", type=float, default=1.0)
    ap.add_argument("--eta", type=float, default=0.5)
    ap.add_argument("--Tb", type=float, default=1.0)
    ap.add_argument("--hbar", type=float, default=0.01)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--points", type=int, default=12)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()

    params = CLParams(args.m, args.eta, args.Tb, hbar=args.hbar)
    times = params.tau * np.linspace(0.1, 4.0, args.points)
    ratios, errs = [], []
    print(f"tau = m / (2 eta) = {params.tau:.4f}")
    print(f"{'t / tau':>8} {'T_e / T_b':>10} {'closed form':>12} {'z':>7}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, t in enumerate(times):
            n_steps = max(1, math.ceil(params.gamma * t / 0.05))
            ens = langevin_sample(params, (0.0, 0.0), 0.0, float(t), n_steps, args.samples, args.seed + i,
                                  threads=args.threads)
            ratio = float(np.mean(ens.p**2)) / (params.m * params.k * params.T_b)
            exact = effective_temperature(params, float(t)) / params.T_b
            err = exact * math.sqrt(2.0 / args.samples)
            ratios.append(ratio)
            errs.append(err)
            print(f"{t / params.tau:8.3f} {ratio:10.5f} {exact:12.5f} {(ratio - exact) / err:7.2f}")
    tau = thermalization_fit(times, ratios, errs)
    print(f"fitted tau {tau:.5f}, relative error {tau / params.tau - 1:+.3%}")


if __name__ == "__main__":
    main()
