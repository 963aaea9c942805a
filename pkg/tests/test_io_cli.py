import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from wigprop import cli
from wigprop.errors import ParseError, SchemaError
from wigprop.io import (
    dumps_json,
    grid_binary,
    load_scenario,
    read_gaussian_json,
    read_grid_binary,
    read_grid_csv,
    read_json,
    read_table_csv,
    scenario_from_dict,
    sha256_file,
    table_csv,
    write_gaussian_json,
    write_grid_binary,
    write_grid_csv,
    write_json,
)
from wigprop.states import GaussianWignerState, GridWignerState, gaussian_packet

QUAD = {"kind": "quad", "m": 1, "c": {"const": 0.5}, "t_a": 0, "t_b": 1,
        "state": {"packet": {"x0": 0.5, "p0": 0.0, "delta": 0.8}}}
CL = {"kind": "cl", "m": 1, "eta": 0.5, "T_b": 1, "dt": 1, "samples": 20000, "seed": 42, "hbar": 0.01,
      "initial": {"point": [0.0, 2.0]}}


def dump(tmp_path, obj, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


class TestLoadScenario:
    def test_minimal_quad_defaults(self, tmp_path):
        sc = load_scenario(dump(tmp_path, QUAD))
        echo = sc.echo()
        assert echo["hbar"] == 1.0 and echo["k"] == 1.0
        assert echo["n_steps"] >= 2 and echo["grid"] == {"nx": 256, "np": 256, "n_sigma": 8.0}
        assert echo["a"] == {"const": 0.0}

    def test_negative_mass_names_field(self, tmp_path):
        with pytest.raises(SchemaError) as exc:
            load_scenario(dump(tmp_path, {**QUAD, "m": -1}))
        assert exc.value.field == "m"
        assert "m" in str(exc.value)

    def test_table_domain(self, tmp_path):
        bad = {**QUAD, "c": {"table": {"t0": 0.0, "dt": 0.1, "values": [0.5, 0.5, 0.5]}}}
        with pytest.raises(SchemaError, match="coefficient domain"):
            load_scenario(dump(tmp_path, bad))

    def test_parse_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_scenario(path)

    def test_missing_field(self):
        with pytest.raises(SchemaError) as exc:
            scenario_from_dict({k: v for k, v in QUAD.items() if k != "state"})
        assert exc.value.field == "state"

    def test_unknown_kind(self):
        with pytest.raises(SchemaError):
            scenario_from_dict({"kind": "nope"})

    def test_inadmissible_gaussian(self):
        bad = {**QUAD, "state": {"gaussian": {"mean": [0, 0], "cov": [[0.1, 0], [0, 0.1]]}}}
        with pytest.raises(SchemaError) as exc:
            scenario_from_dict(bad)
        assert exc.value.field == "state.gaussian"

    def test_cl_step_policy(self):
        sc = scenario_from_dict(CL)
        assert sc.params["n_steps"] == 10


class TestRun:
    def test_harmonic_full_period(self, tmp_path):
        obj = {**QUAD, "t_b": 2 * math.pi, "grid": {"nx": 128, "np": 128}}
        rep = cli.run(scenario_from_dict(obj), tmp_path)
        assert rep.diagnostics["norm_drift"] < 1e-6
        assert rep.diagnostics["det_deviation"] < 1e-8
        assert set(rep.digests) == {"state_a.json", "state_b.json", "map.json", "wigner_a.csv", "wigner_b.csv"}
        a, b = read_gaussian_json(tmp_path / "state_a.json"), read_gaussian_json(tmp_path / "state_b.json")
        np.testing.assert_allclose(b.cov, a.cov, atol=1e-9)
        report = read_json(tmp_path / "report.json")
        assert report["scenario"]["n_steps"] == rep.scenario["n_steps"]
        for name, digest in rep.digests.items():
            assert sha256_file(tmp_path / name) == digest

    def test_cl_twice_same_digests(self, tmp_path):
        sc = scenario_from_dict(CL)
        a = cli.run(sc, tmp_path / "a").digests
        b = cli.run(sc, tmp_path / "b").digests
        assert a == b
        out = read_json(tmp_path / "a" / "cl.json")
        assert out["mean_factor"] == pytest.approx(math.exp(-0.5))
        assert out["sigma2"] == pytest.approx(1 - math.exp(-1))
        assert out["Te"] == pytest.approx(1 - math.exp(-1))
        assert 0 <= out["ks_stat"] < 0.02

    def test_uncoupled_influence(self, tmp_path):
        t = np.linspace(0, 1, 11)
        obj = {"kind": "influence", "paths": {"t_a": 0, "t_b": 1, "x": np.sin(t).tolist(), "x_prime": np.cos(t).tolist()},
               "oscillators": [{"M": 1, "omega": 1, "gamma": 0, "initial": {"thermal": {"beta": 1}}}]}
        cli.run(scenario_from_dict(obj), tmp_path)
        out = read_json(tmp_path / "phase.json")
        assert out["abs_F"] == 1.0 and out["re_phi"] == 0.0 and out["im_phi"] == 0.0

    def test_influence_bath_and_csv_paths(self, tmp_path):
        t = np.linspace(0, 1, 21)
        (tmp_path / "paths.csv").write_bytes(table_csv(("t", "x", "x_prime"), (t, np.sin(t), 0.5 * t)))
        obj = {"kind": "influence", "paths": {"csv": "paths.csv"},
               "bath": {"spectral": {"lines": [[1.3, 0.4]]}, "beta": 0.5}}
        path = dump(tmp_path, obj)
        cli.run(load_scenario(path), tmp_path / "out")
        out = read_json(tmp_path / "out" / "phase.json")
        assert out["im_phi"] > 0 and 0 < out["abs_F"] < 1

    def test_kernels(self, tmp_path):
        obj = {"kind": "kernels", "spectral": {"ohmic": {"eta": 0.5, "cutoff": 10}}, "beta": 1, "t_max": 1, "n_t": 11}
        cli.run(scenario_from_dict(obj), tmp_path)
        cols = read_table_csv(tmp_path / "kernels.csv")
        assert list(cols) == ["t", "A", "R", "A1", "A2", "A3", "A4", "R1", "R2", "R3", "R4"]
        assert cols["A"][0] == 0.0 and cols["t"].size == 11


class TestMain:
    def test_quad_ok(self, tmp_path, capsys):
        rc = cli.main(["quad", "--scenario", str(dump(tmp_path, {**QUAD, "grid": {"nx": 64, "np": 64}})),
                       "--out", str(tmp_path / "o"), "--oracle"])
        assert rc == 0
        assert "wigner_b.csv" in capsys.readouterr().out
        assert read_json(tmp_path / "o" / "report.json")["diagnostics"]["l1_vs_oracle"] < 5e-2

    def test_cl_flags_only(self, tmp_path):
        rc = cli.main(["cl", "--m", "1", "--eta", "0.5", "--Tb", "100", "--dt", "1", "--samples", "1000",
                       "--seed", "3", "--histogram", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "histogram.csv").exists()
        assert read_json(tmp_path / "cl.json")["n_steps"] == 10

    def test_schema_exit_code(self, tmp_path, capsys):
        assert cli.main(["quad", "--scenario", str(dump(tmp_path, {**QUAD, "m": -1})), "--out", str(tmp_path)]) == 2
        assert "m:" in capsys.readouterr().err

    def test_kind_mismatch(self, tmp_path):
        assert cli.main(["cl", "--scenario", str(dump(tmp_path, QUAD)), "--out", str(tmp_path)]) == 2

    def test_numerical_exit_code(self, tmp_path):
        obj = {**QUAD, "c": {"const": 0.0}, "t_b": 5, "state": {"packet": {"x0": 0, "p0": 3, "delta": 1}},
               "grid": {"nx": 32, "np": 32, "x": [-5, 5], "p": [-6, 6]}}
        assert cli.main(["quad", "--scenario", str(dump(tmp_path, obj)), "--out", str(tmp_path)]) == 3

    def test_io_exit_code(self, tmp_path):
        assert cli.main(["quad", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 4
        blocker = tmp_path / "file"
        blocker.write_text("")
        scen = dump(tmp_path, {**QUAD, "grid": {"nx": 16, "np": 16}})
        assert cli.main(["quad", "--scenario", str(scen), "--out", str(blocker / "sub")]) == 4

    def test_thread_count_does_not_change_bytes(self, tmp_path, monkeypatch):
        scen = dump(tmp_path, {**CL, "samples": 140_000, "histogram": {"nx": 16, "np": 16}})
        digests = []
        for threads in ("1", "3"):
            monkeypatch.setenv("WIGPROP_THREADS", threads)
            out = tmp_path / f"t{threads}"
            assert cli.main(["cl", "--scenario", str(scen), "--out", str(out)]) == 0
            digests.append(read_json(out / "report.json")["digests"])
        assert digests[0] == digests[1]


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


class TestRoundTrip:
    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (5, 4), elements=finite))
    def test_grid_csv_and_binary(self, values):
        import tempfile
        from pathlib import Path

        f = GridWignerState(np.linspace(-1, 1, 5), np.linspace(0, 3, 4), values, hbar=0.3, norm_tol=None)
        with tempfile.TemporaryDirectory() as d:
            write_grid_csv(Path(d) / "g.csv", f)
            write_grid_binary(Path(d) / "g.bin", f)
            for back in (read_grid_csv(Path(d) / "g.csv", hbar=0.3), read_grid_binary(Path(d) / "g.bin")):
                assert back.values.tobytes() == f.values.tobytes()
                assert back.x.tobytes() == f.x.tobytes() and back.p.tobytes() == f.p.tobytes()
                assert back.hbar == 0.3

    def test_grid_csv_order(self, tmp_path):
        f = gaussian_packet(0, 0, 1).render(np.linspace(-6, 6, 3), np.linspace(-2, 2, 2), norm_tol=None)
        write_grid_csv(tmp_path / "g.csv", f)
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "x,p,f"
        assert [tuple(map(float, l.split(",")[:2])) for l in lines[1:]] == [
            (-6, -2), (-6, 2), (0, -2), (0, 2), (6, -2), (6, 2)]

    def test_binary_layout(self):
        f = GridWignerState([0.0, 1.0], [0.0, 1.0, 2.0], np.arange(6.0).reshape(2, 3), norm_tol=None)
        raw = grid_binary(f)
        assert raw[:8] == b"WIGGRID1" and len(raw) == 8 + 24 + 8 * (2 + 3 + 6)
        assert np.frombuffer(raw[-48:], "<f8").tolist() == list(range(6))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=20))
    def test_json_floats(self, xs):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as d:
            write_json(Path(d) / "v.json", {"v": np.array(xs)})
            assert read_json(Path(d) / "v.json")["v"] == xs

    def test_gaussian_json(self, tmp_path):
        g = GaussianWignerState([0.1, 1 / 3], [[0.7, 0.1], [0.1, 2 / 3]], hbar=0.7)
        write_gaussian_json(tmp_path / "g.json", g)
        back = read_gaussian_json(tmp_path / "g.json")
        assert back.mean.tobytes() == g.mean.tobytes() and back.cov.tobytes() == g.cov.tobytes() and back.hbar == 0.7

    def test_table_csv(self, tmp_path):
        cols = (np.array([0.1, 1e-300, -2.5e17]), np.array([math.pi, 1 / 3, 0.0]))
        (tmp_path / "t.csv").write_bytes(table_csv(("a", "b"), cols))
        back = read_table_csv(tmp_path / "t.csv")
        assert back["a"].tobytes() == cols[0].tobytes() and back["b"].tobytes() == cols[1].tobytes()

    def test_non_finite_rejected(self):
        with pytest.raises(Exception):
            dumps_json({"x": float("nan")})
