"""JSON problem configuration: schema, default materialisation and builders.

A config is validated against ``SCHEMA`` (unknown keys are rejected at every
level) and then completed with the schema defaults, so the resolved document
echoed into ``manifest.json`` fully determines a run.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .geometry import Potential
from .problem import ScatterProblem
from .sigma import sigma_from_dict
from .spaces import velocity_space_from_dict

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_OPT_POS = {"type": ["number", "null"], "exclusiveMinimum": 0}
_TIMES = {"type": ["array", "null"], "items": _NONNEG}


def _obj(props, required=(), **extra):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False, **extra}


_VELOCITY = {"oneOf": [
    _obj({"kind": {"const": "interval"}, "lo": _NUM, "hi": _NUM}, ["kind", "lo", "hi"]),
    _obj({"kind": {"const": "box"}, "lo": _VEC, "hi": _VEC}, ["kind", "lo", "hi"]),
    _obj({"kind": {"const": "ball"}, "center": _VEC, "radius": _POS},
         ["kind", "center", "radius"]),
    _obj({"kind": {"const": "discrete"},
          "velocities": {"type": "array", "items": _VEC, "minItems": 1},
          "weights": {"type": "array", "items": _NONNEG, "minItems": 1}},
         ["kind", "velocities", "weights"]),
    _obj({"kind": {"const": "whole"}}, ["kind"]),
]}

_SIGMA = {"oneOf": [
    _obj({"kind": {"const": "constant"}, "value": _NONNEG}, ["kind", "value"]),
    _obj({"kind": {"const": "bump"}, "centers": {"type": "array", "items": _VEC, "minItems": 1},
          "radii": {"type": "array", "items": _POS, "minItems": 1},
          "heights": {"type": "array", "items": _NONNEG, "minItems": 1}},
         ["kind", "centers", "radii", "heights"]),
    _obj({"kind": {"const": "indicator"}, "lo": _VEC, "hi": _VEC, "width": _POS,
          "height": {**_NONNEG, "default": 1.0}},
         ["kind", "lo", "hi", "width"]),
]}

_TERM = _obj({"a": _NUM, "k": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
              "phi": {**_NUM, "default": 0.0}}, ["a", "k"])

_POTENTIAL = {"oneOf": [
    _obj({"kind": {"const": "zero"}}, ["kind"]),
    _obj({"kind": {"const": "cosine_sum"}, "terms": {"type": "array", "items": _TERM}},
         ["kind", "terms"]),
]}

_REGIME = {"oneOf": [
    {"type": "null"},
    _obj({"kind": {"const": "R1"}, "gamma": _POS, "v0": _VEC, "r0": _POS},
         ["kind", "gamma", "v0", "r0"]),
    _obj({"kind": {"const": "R2"}, "c": {"type": "number", "exclusiveMinimum": 0, "maximum": 1,
                                          "default": 1.0}},
         ["kind"]),
]}

_INITIAL = {"oneOf": [
    _obj({"kind": {"const": "cell"},
          "x": {"type": ["number", "null"], "default": None},
          "v": {"type": ["number", "null"], "default": None}}, ["kind"]),
    _obj({"kind": {"const": "equilibrium"}}, ["kind"]),
    _obj({"kind": {"const": "region"},
          "x": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
          "v": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
         ["kind", "x", "v"]),
]}

SCHEMA = _obj({
    "d": {"type": "integer", "minimum": 1, "maximum": 3, "default": 1},
    "velocity": _VELOCITY,
    "sigma": _SIGMA,
    "potential": {**_POTENTIAL, "default": {"kind": "zero"}},
    "kernel": {"type": ["array", "null"], "items": {"type": "array", "items": _NONNEG},
               "default": None},
    "regime": {**_REGIME, "default": None},
    "variant": {"enum": [None, "LemmaForm", "TheoremForm"], "default": None},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1, "default": 0},
    "workers": {**_INT1, "default": 1},
    "gcc": _obj({
        "T": {"type": "array", "items": _POS, "minItems": 1, "default": [1.0]},
        "n_x": {**_INT1, "default": 128},
        "n_v": {**_INT1, "default": 65},
        "n_quad": {"type": "integer", "minimum": 2, "default": 128},
        "v_max": {**_OPT_POS, "default": None},
        "threshold": {**_NONNEG, "default": 1e-6},
        "refine": {"type": "boolean", "default": True},
        "flow_dt": {**_OPT_POS, "default": None},
        "write_samples": {"type": "boolean", "default": False},
        "spectral_T": {"type": ["array", "null"], "items": _POS, "default": None},
    }, default={}),
    "solver": _obj({
        "n_x": {**_INT1, "default": 256},
        "n_v": {**_INT1, "default": 64},
        "v_max": {**_POS, "default": 6.0},
        "dt": {**_OPT_POS, "default": None},
        "t_end": {"type": ["number", "string", "null"], "default": None},
        "snapshot_every": {**_INT1, "default": 1},
        "snapshot_times": {**_TIMES, "default": None},
        "initial": {**_INITIAL, "default": {"kind": "cell"}},
        "write_snapshots": {"type": "boolean", "default": True},
    }, default={}),
    "mc": _obj({
        "n": {**_INT1, "default": 100000},
        "t_end": {**_NONNEG, "default": 1.0},
        "snapshot_times": {**_TIMES, "default": None},
        "initial": {"enum": ["equilibrium", "solver"], "default": "equilibrium"},
        "flow_dt": {**_OPT_POS, "default": None},
        "survival_quadrature": {"type": "boolean", "default": True},
        "n_quad": {"type": "integer", "minimum": 2, "default": 128},
        "write_particles": {"type": "boolean", "default": True},
    }, default={}),
    "fit": _obj({
        "input": {"type": ["string", "null"], "default": None},
        "window": {"type": ["array", "null"], "items": _NUM, "minItems": 2, "maxItems": 2,
                   "default": None},
        "noise_floor": {**_NONNEG, "default": 0.0},
    }, default={}),
    "report": _obj({
        "minorization_slack": {"type": "number", "exclusiveMinimum": 0, "maximum": 1,
                               "default": 0.5},
        "envelope_eps": {**_NONNEG, "default": 1e-12},
    }, default={}),
}, ["velocity", "sigma"])


def _with_defaults(cls):
    validate_props = cls.VALIDATORS["properties"]

    def set_defaults(validator, properties, instance, schema):
        kind = properties.get("kind", {}).get("const")
        # only the matching branch of a tagged oneOf may insert defaults
        if isinstance(instance, dict) and (kind is None or instance.get("kind") == kind):
            for name, sub in properties.items():
                if "default" in sub and name not in instance:
                    instance[name] = copy.deepcopy(sub["default"])
        yield from validate_props(validator, properties, instance, schema)

    return jsonschema.validators.extend(cls, {"properties": set_defaults})


_Validator = jsonschema.Draft202012Validator
_Filler = _with_defaults(_Validator)


def _where(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def _explain(err):
    """Most specific error; for tagged oneOf, the errors of the branch whose tag matches."""
    if not err.context:
        return err
    wrong = {e.relative_schema_path[0] for e in err.context if e.validator == "const"}
    inner = [e for e in err.context if e.relative_schema_path[0] not in wrong]
    return _explain(jsonschema.exceptions.best_match(inner or err.context))


def resolve(raw):
    """Validate a config mapping and return a copy with all defaults filled in."""
    errors = sorted(_Validator(SCHEMA).iter_errors(raw), key=lambda e: _where(e))
    if errors:
        lines = []
        for e in errors:
            best = _explain(e)
            lines.append(f"field {_where(best)}: {best.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    cfg = copy.deepcopy(raw)
    # fill twice: defaults inserted on the first pass may carry nested defaults
    for _ in range(2):
        for _err in _Filler(SCHEMA).iter_errors(cfg):
            pass
    errors = list(_Validator(SCHEMA).iter_errors(cfg))
    if errors:
        raise ConfigError(f"config invalid after defaults: {errors[0].message}")
    return cfg


def load(path):
    """Read, parse and resolve a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return resolve(raw)


def build_problem(cfg):
    d = cfg["d"]
    space = velocity_space_from_dict(cfg["velocity"], d)
    sigma = sigma_from_dict(cfg["sigma"], d)
    W = Potential.from_dict(cfg["potential"], d)
    kernel = None if cfg["kernel"] is None else np.asarray(cfg["kernel"], dtype=float)
    return ScatterProblem(d, sigma, W, space, kernel)


def build_regime(cfg):
    from .certificate import RegimeSpec

    reg = cfg["regime"]
    if reg is None:
        return None
    if reg["kind"] == "R1":
        return RegimeSpec.r1(reg["gamma"], reg["v0"], reg["r0"])
    return RegimeSpec.r2(cfg["d"], reg["c"])


def build_gcc_grid(cfg):
    from .control import GridSpec

    g = cfg["gcc"]
    return GridSpec(n_x=g["n_x"], n_v=g["n_v"], n_quad=g["n_quad"], v_max=g["v_max"],
                    threshold=g["threshold"], refine=g["refine"])
