"""
Run configuration: YAML (or JSON) files validated against a schema.

Unknown keys are rejected.  ``inf`` (or ``.inf`` in YAML) stands for an
infinite ``alpha`` or ``beta``.
"""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .fields import AdvectionSpec, ConfigError, Grid2D, SimParams
from .noise import Mollifier, NoiseSpec

_num = {"type": "number"}
_num_or_inf = {"anyOf": [{"type": "number"}, {"enum": ["inf", "Infinity", "infinity"]}]}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_mode = {
    "type": "object", "additionalProperties": False, "required": ["amp"],
    "properties": {k: _num for k in ("amp", "kx", "omega", "phase", "y_half_width")}
    | {"y_center": {"type": ["number", "null"]}},
}
_series = {
    "anyOf": [
        _num,
        {"type": "object", "additionalProperties": False,
         "properties": {"constant": _num, "modes": {"type": "array", "items": _mode}}},
    ]
}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": list(required)}


SCHEMA = _obj({
    "model": {"enum": ["g", "eikonal", "general"]},
    "r": _num,
    "eps": _num,
    "alpha": _num_or_inf,
    "beta": _num_or_inf,
    "enforce_smallness": {"type": "boolean"},
    "threads": {"type": "integer", "minimum": 1},
    "grid": _obj({"x_range": _interval, "y_range": _interval,
                  "nx": {"type": "integer", "minimum": 1},
                  "ny": {"type": "integer", "minimum": 3}}),
    "advection": _obj({"u_perp": _series, "u_par": _series,
                       "norm_C1": {"type": ["number", "null"]},
                       "norm_C2": {"type": ["number", "null"]}}),
    "noise": _obj({
        "seed": {"type": "integer"},
        "step_law": {"enum": ["rademacher", "unit_gaussian"]},
        "mollifier": _obj({"half_width": _num, "power": _num}),
        "scale_sigma": _num,
        "bound_M": {"type": ["number", "null"]},
        "y_range": {"anyOf": [_interval, {"type": "null"}]},
        "n_normalization": {"type": "integer", "minimum": 100},
    }),
    "initial": _obj({"profile": {"enum": ["linear", "tanh", "half"]}}),
    "solver": _obj({"scheme": {"enum": ["godunov_r1", "lax_friedrichs", None]},
                    "cfl": _num, "laplacian": {"enum": ["full", "x"]}}),
    "output": _obj({"times": {"type": "array", "items": _num, "minItems": 1},
                    "csv_dir": {"type": ["string", "null"]},
                    "plots": {"type": "boolean"}}),
    "metric": _obj({"hy": _num, "tol": _num, "xi_max": _num, "nx": {"type": "integer"}}),
    "limit": _obj({"viscous": {"type": "boolean"}, "nx": {"type": "integer", "minimum": 3},
                   "xi_max": _num, "dxi": _num, "driver": {"enum": ["coupled", "sampled"]},
                   "n_drivers": {"type": "integer", "minimum": 1}}),
    "ensemble": _obj({"n_samples": {"type": "integer", "minimum": 2},
                      "master_seed": {"type": "integer"},
                      "pipeline": {"enum": ["front", "corrector", "limit"]},
                      "eps_list": {"type": "array", "items": _num, "minItems": 1},
                      "probe_times": {"type": "array", "items": _num},
                      "probe_xi": {"type": "array", "items": _num},
                      "hy": _num}),
    "verify": _obj({"criteria": {"type": "array", "items": {"type": "integer"}}}),
})

DEFAULTS = {
    "model": "g",
    "eps": 0.1,
    "alpha": "inf",
    "beta": "inf",
    "enforce_smallness": True,
    "threads": 1,
    "grid": {"x_range": [0.0, 2 * math.pi], "y_range": [-1.0, 2.5], "nx": 1, "ny": 351},
    "advection": {"u_perp": 0.0, "u_par": 1.0, "norm_C1": None, "norm_C2": None},
    "noise": {"seed": 0, "step_law": "rademacher",
              "mollifier": {"half_width": 0.5, "power": 1.0},
              "scale_sigma": 1.0, "bound_M": None, "y_range": None,
              "n_normalization": 2000},
    "initial": {"profile": "linear"},
    "solver": {"scheme": None, "cfl": 0.45, "laplacian": "full"},
    "output": {"times": [0.5, 1.0], "csv_dir": None, "plots": True},
    "metric": {"hy": 0.02, "tol": 1e-6, "xi_max": 1.0},
    "limit": {"viscous": False, "nx": 64, "xi_max": 1.0, "dxi": 0.005, "driver": "coupled",
              "n_drivers": 1},
    "ensemble": {"n_samples": 100, "master_seed": 0, "pipeline": "front",
                 "eps_list": [0.1], "probe_times": [0.5, 1.0], "probe_xi": [0.0, 0.5, 1.0],
                 "hy": 0.01},
    "verify": {"criteria": list(range(1, 13))},
}

MODEL_R = {"g": 1.0, "eikonal": 2.0}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _to_float(v):
    return math.inf if isinstance(v, str) else float(v)


def default_config_path():
    return Path(str(resources.files("hjfront") / "configs" / "default.yaml"))


def load_config(path=None, overrides=None):
    """Read, validate and complete a configuration.

    Raises :class:`ConfigError` on parse or schema errors; the message
    names the offending key.
    """
    path = Path(path) if path is not None else default_config_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    raw = raw or {}
    if overrides:
        raw = _merge(raw, overrides)
    validate(raw)
    cfg = _merge(DEFAULTS, raw)
    if "r" not in raw and cfg["model"] in MODEL_R:
        cfg["r"] = MODEL_R[cfg["model"]]
    cfg.setdefault("r", 1.0)
    if cfg["model"] in MODEL_R and cfg["r"] != MODEL_R[cfg["model"]]:
        raise ConfigError(f"model '{cfg['model']}' requires r = {MODEL_R[cfg['model']]}")
    return cfg


def validate(raw):
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}")


def build_params(cfg, eps=None):
    return SimParams(cfg["eps"] if eps is None else eps, _to_float(cfg["alpha"]),
                     _to_float(cfg["beta"]), float(cfg["r"]), cfg["enforce_smallness"])


def build_advection(cfg):
    return AdvectionSpec.from_dict(cfg["advection"])


def build_noise_spec(cfg, seed_override=None):
    n = cfg["noise"]
    try:
        return NoiseSpec(seed=n["seed"] if seed_override is None else seed_override,
                         step_law=n["step_law"],
                         mollifier=Mollifier(**n["mollifier"]),
                         scale_sigma=n["scale_sigma"], bound_M=n["bound_M"])
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from exc


def build_grid(cfg):
    g = cfg["grid"]
    try:
        return Grid2D(tuple(g["x_range"]), tuple(g["y_range"]), g["nx"], g["ny"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def noise_range(cfg, y_needed):
    """Configured noise range, checked to cover ``y_needed``."""
    lo, hi = y_needed
    rng = cfg["noise"]["y_range"]
    if rng is None:
        return (lo - 1.0, hi + 1.0)
    if rng[0] > lo or rng[1] < hi:
        raise ConfigError(
            f"noise.y_range [{rng[0]:g}, {rng[1]:g}] does not cover the required y-range "
            f"[{lo:g}, {hi:g}]")
    return tuple(rng)
