"""Command line entry point: ``wigprop <quad|influence|kernels|cl> --scenario file.json``."""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .caldeira_leggett import (
    Binning,
    CLParams,
    effective_temperature,
    estimate_phase_space_kernel,
    langevin_sample,
    momentum_kernel,
)
from .dynamics import flow_map
from .errors import InvalidInput, NumericalFailure, WigpropError
from .influence import (
    ANTIDERIVATIVES,
    Coupling,
    OscillatorSpec,
    PacketParams,
    PathPair,
    SpectralDensity,
    Thermal,
    Vacuum,
    kernels_from_spectral_density,
    phase_collection,
    phase_continuum,
)
from .io import (
    RunReport,
    Scenario,
    grid_csv,
    atomic_write,
    dumps_json,
    load_scenario,
    potential_from_params,
    read_table_csv,
    scenario_from_dict,
    table_csv,
)
from .propagator import covering_axes, l1_distance, liouville_oracle, propagate_gaussian, propagate_grid
from .states import GaussianWignerState, gaussian_packet, thermal_oscillator

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class _Outputs:
    """Collects artifacts written during a run together with their digests."""

    def __init__(self, out_dir: Path):
        self.dir = Path(out_dir)
        self.digests: dict[str, str] = {}

    def put(self, name: str, data: bytes) -> None:
        self.digests[name] = atomic_write(self.dir / name, data)


def _gaussian(obj: dict, hbar: float) -> GaussianWignerState:
    return GaussianWignerState(np.array(obj["mean"], float), np.array(obj["cov"], float), hbar)


def _quad_initial(p: dict) -> GaussianWignerState:
    st, hbar = p["state"], p["hbar"]
    if "gaussian" in st:
        return _gaussian(st["gaussian"], hbar)
    if "packet" in st:
        q = st["packet"]
        return gaussian_packet(q["x0"], q["p0"], q["delta"], hbar)
    q = st["thermal"]
    return thermal_oscillator(p["m"], q["omega"], q["beta"], hbar)


def run_quad(sc: Scenario, out: _Outputs, oracle: bool) -> dict:
    p = sc.params
    pot = potential_from_params(p)
    fmap = flow_map(pot, p["t_a"], p["t_b"], p["n_steps"])
    g_a = _quad_initial(p)
    g_b = propagate_gaussian(g_a, fmap)
    grid = p["grid"]
    x, pp = covering_axes([g_a, g_b], grid["nx"], grid["np"], grid["n_sigma"])
    if "x" in grid:
        x = np.linspace(grid["x"][0], grid["x"][1], grid["nx"])
    if "p" in grid:
        pp = np.linspace(grid["p"][0], grid["p"][1], grid["np"])
    f_a = g_a.render(x, pp, norm_tol=None)
    f_b = propagate_grid(f_a, fmap, norm_tol=None)
    out.put("state_a.json", dumps_json(g_a.to_json()))
    out.put("state_b.json", dumps_json(g_b.to_json()))
    out.put("map.json", dumps_json({"M": fmap.M, "d": fmap.d}))
    out.put("wigner_a.csv", grid_csv(f_a))
    out.put("wigner_b.csv", grid_csv(f_b))
    diag = {
        "det_deviation": fmap.det_deviation,
        "norm_drift": abs(f_b.norm - f_a.norm),
        "l1_grid_vs_gaussian": l1_distance(f_b, g_b.render(x, pp, norm_tol=None)),
        "n_steps": p["n_steps"],
    }
    if oracle or p["oracle"]:
        ref = liouville_oracle(f_a, pot, p["t_a"], p["t_b"])
        diag["l1_vs_oracle"] = l1_distance(f_b, ref)
    return diag


def _paths(sc: Scenario) -> PathPair:
    spec = sc.params["paths"]
    if "csv" in spec:
        cols = read_table_csv(sc.resolve(spec["csv"]))
        missing = {"t", "x", "x_prime"} - set(cols)
        if missing:
            raise InvalidInput(f"paths CSV lacks columns {sorted(missing)}")
        return PathPair(cols["t"], cols["x"], cols["x_prime"])
    return PathPair.on_grid(spec["t_a"], spec["t_b"], spec["x"], spec["x_prime"])


def _oscillator(o: dict, hbar: float) -> OscillatorSpec:
    g = o["gamma"]
    coupling = Coupling(strength=float(g)) if not isinstance(g, dict) else Coupling(
        func=lambda x, c=tuple(g["poly"]): np.polynomial.polynomial.polyval(x, c))
    init = o.get("initial", {"vacuum": {}})
    if "thermal" in init:
        state = Thermal(init["thermal"]["beta"])
    elif "packet" in init:
        q = init["packet"]
        state = PacketParams(q["u0"], q["p0"], q["delta"])
    elif "gaussian" in init:
        state = _gaussian(init["gaussian"], hbar)
    else:
        state = Vacuum()
    return OscillatorSpec(o["M"], o["omega"], coupling, state)


def run_influence(sc: Scenario, out: _Outputs) -> dict:
    p, hbar = sc.params, sc.hbar
    paths = _paths(sc)
    if "oscillators" in p:
        phase = phase_collection(paths, [_oscillator(o, hbar) for o in p["oscillators"]], hbar)
        route = "oscillators"
    else:
        bath = p["bath"]
        refine = bath["refine"]
        sd = SpectralDensity.from_json(bath["spectral"])
        kern = kernels_from_spectral_density(sd, bath["beta"], hbar, paths.duration, (paths.times.size - 1) * refine + 1)
        phase = phase_continuum(paths, kern, hbar, scheme=bath["scheme"])
        route = "continuum"
    result = {"re_phi": phase.re, "im_phi": phase.im, "abs_F": phase.abs_F, "hbar": hbar}
    out.put("phase.json", dumps_json(result))
    return {"route": route, "n_nodes": int(paths.times.size), **result}


def run_kernels(sc: Scenario, out: _Outputs) -> dict:
    p = sc.params
    sd = SpectralDensity.from_json(p["spectral"])
    k = kernels_from_spectral_density(sd, p["beta"], sc.hbar, p["t_max"], p["n_t"])
    names = ("t", "A", "R") + ANTIDERIVATIVES
    out.put("kernels.csv", table_csv(names, [k.times, k.A, k.R] + [getattr(k, c) for c in ANTIDERIVATIVES]))
    return {"A0": float(k.A[0]), "R0": float(k.R[0]), "n_t": int(k.times.size)}


def run_cl(sc: Scenario, out: _Outputs) -> dict:
    from scipy import stats

    p = sc.params
    params = CLParams(p["m"], p["eta"], p["T_b"], sc.k, sc.hbar)
    kern = momentum_kernel(params, p["dt"])
    init = p["initial"]
    if "gaussian" in init:
        initial = _gaussian(init["gaussian"], sc.hbar)
        mean0, var0 = float(initial.mean[1]), float(initial.cov[1, 1])
    else:
        initial = tuple(init["point"])
        mean0, var0 = float(initial[1]), 0.0
    ens = langevin_sample(params, initial, 0.0, p["dt"], p["n_steps"], p["samples"], sc.seed, method=p["method"])
    mean_b = kern.mean_factor * mean0
    var_b = kern.mean_factor**2 * var0 + kern.variance
    ks = float(stats.kstest(ens.p, stats.norm(mean_b, math.sqrt(var_b)).cdf).statistic) if var_b > 0 else float("nan")
    result = {
        "mean_factor": kern.mean_factor,
        "sigma2": kern.variance,
        "Te": effective_temperature(params, p["dt"]),
        "ks_stat": ks if math.isfinite(ks) else None,
        "sample_mean_p": float(np.mean(ens.p)),
        "sample_var_p": float(np.var(ens.p)),
        "sample_mean_x": float(np.mean(ens.x)),
        "seed": sc.seed,
        "n_samples": ens.size,
        "n_steps": ens.n_steps,
    }
    out.put("cl.json", dumps_json(result))
    if "histogram" in p:
        h = p["histogram"]
        hist = estimate_phase_space_kernel(ens, Binning.auto(ens, h.get("nx", 64), h.get("np", 64)), sc.hbar)
        out.put("histogram.csv", grid_csv(hist))
    return result


def run(sc: Scenario, out_dir, oracle: bool = False) -> RunReport:
    """Dispatch a validated scenario, write its artifacts and ``report.json``."""
    start = time.perf_counter()
    out = _Outputs(Path(out_dir))
    runners = {
        "quad": lambda: run_quad(sc, out, oracle),
        "influence": lambda: run_influence(sc, out),
        "kernels": lambda: run_kernels(sc, out),
        "cl": lambda: run_cl(sc, out),
    }
    try:
        diag = runners[sc.kind]()
    except WigpropError as exc:
        raise type(exc)(f"[{sc.kind} scenario] {exc}") from exc
    report = RunReport(sc.echo(), __version__, time.perf_counter() - start, diag, dict(out.digests))
    atomic_write(out.dir / "report.json", dumps_json(report.to_json()))
    return report


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wigprop", description="Phase-space propagation and open-system tools.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("quad", "influence", "kernels", "cl"):
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", type=Path, required=name != "cl")
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--seed", type=int)
        if name == "quad":
            sp.add_argument("--oracle", action="store_true", help="also run the grid Liouville solver and report L1")
        if name == "cl":
            for flag, key in (("--m", "m"), ("--eta", "eta"), ("--Tb", "T_b"), ("--dt", "dt")):
                sp.add_argument(flag, dest=key, type=float)
            sp.add_argument("--samples", type=int)
            sp.add_argument("--histogram", action="store_true")
    return ap


def _load(args) -> Scenario:
    if args.scenario is not None:
        sc = load_scenario(args.scenario)
        if sc.kind != args.command:
            raise InvalidInput(f"scenario kind {sc.kind!r} does not match command {args.command!r}")
        raw = {k: v for k, v in sc.params.items()}
        source = sc.source
    else:
        raw, source = {"kind": "cl"}, None
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.command == "cl":
        for key in ("m", "eta", "T_b", "dt", "samples"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        if args.histogram:
            overrides["histogram"] = raw.get("histogram", {})
    if not overrides and args.scenario is not None:
        return sc
    if args.command == "cl" and "n_steps" in raw and any(k in overrides for k in ("m", "eta", "dt")):
        raw.pop("n_steps")  # re-derive the step policy for the new parameters
    return scenario_from_dict({**raw, **overrides}, source)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        sc = _load(args)
        report = run(sc, args.out, oracle=getattr(args, "oracle", False))
    except InvalidInput as exc:
        print(f"wigprop: input error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (NumericalFailure, ArithmeticError) as exc:
        print(f"wigprop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"wigprop: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, digest in report.digests.items():
        print(f"{digest}  {Path(args.out) / name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
