"""Reading and writing run artifacts. Every write goes through a temporary file and a rename."""

from __future__ import annotations

import copy
import hashlib
import io
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np

from .dynamics import Coefficient, QuadraticPotential
from .errors import InvalidInput, ParseError, SchemaError
from .states import GaussianWignerState, GridWignerState

FLOAT_FMT = "%.17g"
GRID_MAGIC = b"WIGGRID1"


# --- low-level writers -------------------------------------------------------

def atomic_write(path, data: bytes) -> str:
    """Write ``data`` through a temporary file in the target directory, then rename. Returns the sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _finite_check(obj, where="output"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise InvalidInput(f"non-finite value in {where}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _finite_check(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _finite_check(v, where)


def to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dumps_json(obj) -> bytes:
    """JSON with shortest round-trip float reprs; non-finite numbers are rejected."""
    obj = to_jsonable(obj)
    _finite_check(obj)
    return (json.dumps(obj, indent=2, allow_nan=False) + "\n").encode()


def write_json(path, obj) -> str:
    return atomic_write(path, dumps_json(obj))


def read_json(path):
    try:
        with open(path, "rb") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def table_csv(header: Sequence[str], columns: Sequence[np.ndarray]) -> bytes:
    cols = [np.asarray(c, dtype=float) for c in columns]
    data = np.column_stack(cols)
    if not np.all(np.isfinite(data)):
        raise InvalidInput("non-finite value in CSV table")
    buf = io.StringIO()
    np.savetxt(buf, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue().encode()


def read_table_csv(path) -> dict:
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if data.shape[1] != len(header):
        raise ParseError(f"{path}: {data.shape[1]} columns but header names {len(header)}")
    return {name: data[:, i].copy() for i, name in enumerate(header)}


# --- states ------------------------------------------------------------------

def grid_csv(state: GridWignerState) -> bytes:
    X, P = np.meshgrid(state.x, state.p, indexing="ij")
    return table_csv(("x", "p", "f"), (X.ravel(), P.ravel(), np.asarray(state.values).ravel()))


def write_grid_csv(path, state: GridWignerState) -> str:
    return atomic_write(path, grid_csv(state))


def read_grid_csv(path, hbar: float = 1.0, norm_tol: Optional[float] = None) -> GridWignerState:
    cols = read_table_csv(path)
    if set(cols) != {"x", "p", "f"}:
        raise ParseError(f"{path}: grid CSV needs columns x,p,f")
    x = cols["x"][np.r_[True, np.diff(cols["x"]) != 0]]
    np_ = cols["x"].size // x.size
    if x.size * np_ != cols["x"].size:
        raise ParseError(f"{path}: rows do not form a full x-major grid")
    p = cols["p"][:np_]
    return GridWignerState(x, p, cols["f"].reshape(x.size, np_), hbar, norm_tol=norm_tol)


def grid_binary(state: GridWignerState) -> bytes:
    """``magic, nx, np (uint64), hbar, x axis, p axis, values`` in little-endian doubles, values x-major."""
    head = GRID_MAGIC + struct.pack("<QQd", state.x.size, state.p.size, state.hbar)
    body = np.concatenate([state.x, state.p, np.asarray(state.values).ravel()]).astype("<f8").tobytes()
    return head + body


def write_grid_binary(path, state: GridWignerState) -> str:
    return atomic_write(path, grid_binary(state))


def read_grid_binary(path, norm_tol: Optional[float] = None) -> GridWignerState:
    raw = Path(path).read_bytes()
    n0 = len(GRID_MAGIC) + 24
    if raw[: len(GRID_MAGIC)] != GRID_MAGIC or len(raw) < n0:
        raise ParseError(f"{path}: not a grid binary file")
    nx, np_, hbar = struct.unpack("<QQd", raw[len(GRID_MAGIC) : n0])
    data = np.frombuffer(raw[n0:], dtype="<f8")
    if data.size != nx + np_ + nx * np_:
        raise ParseError(f"{path}: size does not match header dimensions")
    return GridWignerState(data[:nx], data[nx : nx + np_], data[nx + np_ :].reshape(nx, np_), hbar, norm_tol=norm_tol)


def write_gaussian_json(path, state: GaussianWignerState) -> str:
    return write_json(path, state.to_json())


def read_gaussian_json(path) -> GaussianWignerState:
    return GaussianWignerState.from_json(read_json(path))


# --- scenarios ---------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec2 = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_coef = {
    "oneOf": [
        _num,
        {"type": "object", "properties": {"const": _num}, "required": ["const"], "additionalProperties": False},
        {"type": "object", "properties": {"poly": {"type": "array", "items": _num, "minItems": 1}},
         "required": ["poly"], "additionalProperties": False},
        {"type": "object", "additionalProperties": False, "required": ["table"], "properties": {"table": {
            "type": "object", "required": ["t0", "dt", "values"], "additionalProperties": False,
            "properties": {"t0": _num, "dt": _pos, "values": {"type": "array", "items": _num, "minItems": 2}}}}},
    ]
}
_gaussian = {"type": "object", "required": ["mean", "cov"], "additionalProperties": False,
             "properties": {"mean": _vec2, "cov": {"type": "array", "items": _vec2, "minItems": 2, "maxItems": 2}}}


def _one_key(key, body):
    return {"type": "object", "required": [key], "additionalProperties": False, "properties": {key: body}}


_quad_state = {"oneOf": [
    _one_key("gaussian", _gaussian),
    _one_key("packet", {"type": "object", "required": ["x0", "p0", "delta"], "additionalProperties": False,
                        "properties": {"x0": _num, "p0": _num, "delta": _pos}}),
    _one_key("thermal", {"type": "object", "required": ["omega", "beta"], "additionalProperties": False,
                         "properties": {"omega": _pos, "beta": _pos}}),
]}
_osc_initial = {"oneOf": [
    _one_key("vacuum", {"type": "object", "maxProperties": 0}),
    _one_key("thermal", {"type": "object", "required": ["beta"], "additionalProperties": False,
                         "properties": {"beta": _pos}}),
    _one_key("packet", {"type": "object", "required": ["u0", "p0", "delta"], "additionalProperties": False,
                        "properties": {"u0": _num, "p0": _num, "delta": _pos}}),
    _one_key("gaussian", _gaussian),
]}
_spectral = {"oneOf": [
    _one_key("ohmic", {"type": "object", "required": ["eta", "cutoff"], "additionalProperties": False,
                       "properties": {"eta": _pos, "cutoff": _pos, "shape": {"enum": ["exponential", "sharp"]}}}),
    _one_key("lines", {"type": "array", "minItems": 1, "items": _vec2}),
    _one_key("sampled", {"type": "array", "minItems": 2, "items": _vec2}),
]}
_common = {"kind": {"enum": ["quad", "influence", "kernels", "cl"]}, "hbar": _pos, "k": _pos,
           "seed": {"type": ["integer", "null"], "minimum": 0}, "description": {"type": "string"}}

SCHEMAS = {
    "quad": {
        "type": "object", "required": ["kind", "m", "t_a", "t_b", "state"], "additionalProperties": False,
        "properties": {**_common, "m": _pos, "a": _coef, "b": _coef, "c": _coef, "t_a": _num, "t_b": _num,
                       "n_steps": {"type": ["integer", "null"], "minimum": 1}, "state": _quad_state,
                       "oracle": {"type": "boolean"},
                       "grid": {"type": "object", "additionalProperties": False, "properties": {
                           "nx": {"type": "integer", "minimum": 8}, "np": {"type": "integer", "minimum": 8},
                           "n_sigma": _pos, "x": _vec2, "p": _vec2}}},
    },
    "influence": {
        "type": "object", "required": ["kind", "paths"], "additionalProperties": False,
        "oneOf": [{"required": ["oscillators"]}, {"required": ["bath"]}],
        "properties": {**_common,
                       "paths": {"oneOf": [
                           {"type": "object", "required": ["t_a", "t_b", "x", "x_prime"], "additionalProperties": False,
                            "properties": {"t_a": _num, "t_b": _num,
                                           "x": {"type": "array", "items": _num, "minItems": 2},
                                           "x_prime": {"type": "array", "items": _num, "minItems": 2}}},
                           _one_key("csv", {"type": "string"})]},
                       "oscillators": {"type": "array", "minItems": 1, "items": {
                           "type": "object", "required": ["M", "omega", "gamma"], "additionalProperties": False,
                           "properties": {"M": _pos, "omega": _pos, "initial": _osc_initial,
                                          "gamma": {"oneOf": [_num, _one_key("poly", {"type": "array", "items": _num,
                                                                                       "minItems": 1})]}}}},
                       "bath": {"type": "object", "required": ["spectral", "beta"], "additionalProperties": False,
                                "properties": {"spectral": _spectral, "beta": _pos,
                                               "refine": {"type": "integer", "minimum": 1},
                                               "scheme": {"enum": ["auto", "product", "trapezoid"]}}}},
    },
    "kernels": {
        "type": "object", "required": ["kind", "spectral", "beta", "t_max", "n_t"], "additionalProperties": False,
        "properties": {**_common, "spectral": _spectral, "beta": _pos, "t_max": _pos,
                       "n_t": {"type": "integer", "minimum": 2}},
    },
    "cl": {
        "type": "object", "required": ["kind", "m", "eta", "T_b", "dt", "samples"], "additionalProperties": False,
        "properties": {**_common, "m": _pos, "eta": _pos, "T_b": _pos, "dt": {"type": "number", "minimum": 0},
                       "samples": {"type": "integer", "minimum": 1},
                       "n_steps": {"type": ["integer", "null"], "minimum": 1},
                       "method": {"enum": ["exact", "euler"]},
                       "initial": {"oneOf": [_one_key("point", _vec2), _one_key("gaussian", _gaussian)]},
                       "histogram": {"type": "object", "additionalProperties": False,
                                     "properties": {"nx": {"type": "integer", "minimum": 2},
                                                    "np": {"type": "integer", "minimum": 2}}}},
    },
}

DEFAULTS = {
    "quad": {"hbar": 1.0, "k": 1.0, "seed": None, "a": {"const": 0.0}, "b": {"const": 0.0}, "c": {"const": 0.0},
             "n_steps": None, "oracle": False, "grid": {}},
    "influence": {"hbar": 1.0, "k": 1.0, "seed": None},
    "kernels": {"hbar": 1.0, "k": 1.0, "seed": None},
    "cl": {"hbar": 1.0, "k": 1.0, "seed": None, "n_steps": None, "method": "exact",
           "initial": {"point": [0.0, 0.0]}},
}
GRID_DEFAULTS = {"nx": 256, "np": 256, "n_sigma": 8.0}
CL_STEP_RATIO = 0.05


@dataclass
class Scenario:
    kind: str
    params: dict
    source: Optional[Path] = None

    @property
    def hbar(self) -> float:
        return float(self.params["hbar"])

    @property
    def k(self) -> float:
        return float(self.params["k"])

    @property
    def seed(self) -> Optional[int]:
        return self.params.get("seed")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    def echo(self) -> dict:
        return copy.deepcopy(self.params)


def _field_of(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path = f"{path}.{missing}" if path else missing
    if err.validator == "additionalProperties" and "'" in err.message:
        extra = err.message.split("'")[1]
        path = f"{path}.{extra}" if path else extra
    return path or "<root>"


def validate_scenario(obj: Any) -> None:
    if not isinstance(obj, dict):
        raise SchemaError("scenario must be a JSON object", field="<root>")
    kind = obj.get("kind")
    if kind not in SCHEMAS:
        raise SchemaError(f"kind must be one of {sorted(SCHEMAS)}, got {kind!r}", field="kind")
    validator = jsonschema.Draft202012Validator(SCHEMAS[kind])
    err = jsonschema.exceptions.best_match(validator.iter_errors(obj))
    if err is not None:
        raise SchemaError(err.message, field=_field_of(err))


def _semantic_checks(sc: Scenario) -> None:
    p = sc.params
    if sc.kind == "quad":
        if not p["t_b"] > p["t_a"]:
            raise SchemaError("t_b must exceed t_a", field="t_b")
        for name in ("a", "b", "c"):
            try:
                coef = Coefficient.from_json(p[name])
            except InvalidInput as exc:
                raise SchemaError(str(exc), field=name) from exc
            if not coef.covers(p["t_a"], p["t_b"]):
                lo, hi = coef.domain
                raise SchemaError(f"coefficient domain [{lo}, {hi}] does not cover [{p['t_a']}, {p['t_b']}]", field=name)
        if "gaussian" in p["state"]:
            try:
                GaussianWignerState.from_json({**p["state"]["gaussian"], "hbar": p["hbar"]})
            except InvalidInput as exc:
                raise SchemaError(str(exc), field="state.gaussian") from exc
    elif sc.kind == "influence":
        paths = p["paths"]
        if "x" in paths:
            if len(paths["x"]) != len(paths["x_prime"]):
                raise SchemaError("x and x_prime must have equal lengths", field="paths.x_prime")
            if not paths["t_b"] > paths["t_a"]:
                raise SchemaError("t_b must exceed t_a", field="paths.t_b")
    elif sc.kind == "cl":
        if "gaussian" in p["initial"]:
            try:
                GaussianWignerState.from_json({**p["initial"]["gaussian"], "hbar": p["hbar"]})
            except InvalidInput as exc:
                raise SchemaError(str(exc), field="initial.gaussian") from exc


def scenario_from_dict(obj: dict, source: Optional[Path] = None) -> Scenario:
    validate_scenario(obj)
    kind = obj["kind"]
    params = copy.deepcopy(DEFAULTS[kind])
    params.update(copy.deepcopy(obj))
    # normalize numbers so echoes are stable
    for key in ("hbar", "k"):
        params[key] = float(params[key])
    if kind == "quad":
        params["grid"] = {**GRID_DEFAULTS, **params["grid"]}
    if kind == "cl" and params["n_steps"] is None:
        ratio = params["eta"] * params["dt"] / params["m"]
        params["n_steps"] = max(1, math.ceil(ratio / CL_STEP_RATIO))
    if kind == "influence" and "bath" in params:
        params["bath"] = {"refine": 1, "scheme": "auto", **params["bath"]}
    sc = Scenario(kind, params, source)
    _semantic_checks(sc)
    if kind == "quad" and params["n_steps"] is None:
        params["n_steps"] = potential_from_params(params).default_steps(params["t_a"], params["t_b"])
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    obj = read_json(path)
    return scenario_from_dict(obj, source=path)


def potential_from_params(params: dict) -> QuadraticPotential:
    return QuadraticPotential(
        float(params["m"]),
        Coefficient.from_json(params.get("a", 0.0)),
        Coefficient.from_json(params.get("b", 0.0)),
        Coefficient.from_json(params.get("c", 0.0)),
    )


@dataclass
class RunReport:
    scenario: dict
    version: str
    wall_time: float
    diagnostics: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "version": self.version, "wall_time_s": self.wall_time,
                "diagnostics": self.diagnostics, "digests": self.digests}
