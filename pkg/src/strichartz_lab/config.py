"""Experiment configuration: JSON schema, validation, default materialization.

Configs are flat JSON objects with a fixed top level::

    {"experiment": "<kind>", "seed": 1, "geometry": {...}, "params": {...}}

Unknown keys are rejected at every level and every default is filled in,
so the echoed config written next to the results is complete and
re-runnable byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from .errors import ConfigError
from .geometry import GeometrySpec
from .hartree import PotentialSpec

__all__ = ["EXPERIMENT_KINDS", "validate_config", "load_config",
           "schema_document"]


@dataclass(frozen=True)
class _Opt:
    typ: str                     # int | float | num | bool | str | list-int |
                                 # list-num | list-str | list-pair | obj
    default: Any = None
    required: bool = False
    choices: tuple | None = None


_GEOMETRY_SCHEMA = {
    "kind": _Opt("str", required=True, choices=("torus", "waveguide")),
    "grid_sizes": _Opt("list-int", required=True),
    "n_free": _Opt("int", 0),
    "trunc_length": _Opt("num", 1.0),
}

_POTENTIAL_SCHEMA = {
    "kind": _Opt("str", required=True,
                 choices=("yukawa", "gaussian", "cosine", "identity", "zero")),
    "a": _Opt("num", 1.0),
    "sigma_w": _Opt("num", 1.0),
    "k0": _Opt("int", 1),
    "s": _Opt("num", 0.5),
    "qprime": _Opt("num", 2.0),
}

_SCHEMAS: dict[str, dict[str, _Opt]] = {
    "kernel-sweep": {
        "theta": _Opt("list-num", [2.5, 3.0]),
        "N": _Opt("list-int", [8, 16, 32, 64, 128]),
        "t_grid_pts": _Opt("int", 512),
        "x_grid_pts": _Opt("int", 512),
        "t_min": _Opt("num", 1e-6),
        "max_ratio": _Opt("num", 2.0),
        "check_refinement": _Opt("bool", True),
    },
    "vdc-oracle": {
        "theta": _Opt("num", 3.0),
        "x": _Opt("num", 0.0),
        "p": _Opt("int", 0),
        "b": _Opt("num", 2.0),
        "t": _Opt("list-num", [10.0, 100.0, 1000.0]),
        "tol": _Opt("num", 1e-8),
        "max_ratio": _Opt("num", 2.0),
    },
    "strichartz-fit": {
        "theta": _Opt("num", 2.0),
        "p": _Opt("num", 8.0),
        "q": _Opt("num", 8.0),
        "N": _Opt("list-int", [8, 16, 32, 64, 128]),
        "family": _Opt("str", "dirichlet", choices=("dirichlet", "random")),
        "samples": _Opt("int", 100),
        "time_pts": _Opt("int", 257),
        "time_pts_scale": _Opt("num", 4.0),
        "estimate": _Opt("str", "diagonal-schrodinger-cutoff"),
        "sigma_margin": _Opt("num", 0.05),
        "slope_tol": _Opt("num", 0.12),
        "spread_max": _Opt("num", 3.0),
    },
    "ons-sweep": {
        "theta": _Opt("num", 3.0),
        "p": _Opt("num", 6.0),
        "q": _Opt("num", 2.0),
        "alpha_prime": _Opt("list-num", [4.0 / 3.0]),
        "N": _Opt("list-int", [8, 16, 32, 64, 128]),
        "estimate": _Opt("str", "theta-line-ons"),
        "admissibility": _Opt("str", "theta-line"),
        "family_kinds": _Opt("list-pair", [["fourier-modes", 1]]),
        "lambda_kind": _Opt("str", "flat",
                            choices=("flat", "power", "one-hot")),
        "time_pts": _Opt("int", 33),
        "interval_mode": _Opt("str", "unit",
                              choices=("unit", "dispersive-window")),
        "slope_tol": _Opt("num", 0.1),
    },
    "duality-check": {
        "N": _Opt("int", 2),
        "alpha": _Opt("list-num", [4.0]),
        "theta": _Opt("num", 2.0),
        "time_pts": _Opt("int", 9),
        "interval": _Opt("list-num", [0.0, 1.0]),
        "weight": _Opt("str", "unit", choices=("unit", "random")),
        "samples": _Opt("int", 200),
    },
    "hartree-run": {
        "theta": _Opt("list-num", [2.0, 3.0]),
        "members": _Opt("int", 4),
        "band": _Opt("int", 2),
        "weights": _Opt("list-num", [0.4, 0.3, 0.2, 0.1]),
        "potential": _Opt("obj", {"kind": "yukawa"}),
        "T": _Opt("num", 1.0),
        "dt": _Opt("list-num", [1e-3, 5e-4]),
        "q_report": _Opt("num", 2.0),
        "mass_tol": _Opt("num", 1e-10),
        "gram_tol": _Opt("num", 1e-9),
        "energy_tol": _Opt("num", 1e-6),
        "halving_min": _Opt("num", 3.5),
    },
    "fixed-point": {
        "theta": _Opt("num", 2.0),
        "members": _Opt("int", 4),
        "band": _Opt("int", 4),
        "weights": _Opt("list-num", [0.4, 0.3, 0.2, 0.1]),
        "target_norm": _Opt("num", 0.1),
        "potential": _Opt("obj", {"kind": "yukawa"}),
        "T": _Opt("num", 0.05),
        "iterations": _Opt("int", 6),
        "p": _Opt("num", 4.0),
        "q": _Opt("num", 2.0),
        "time_pts": _Opt("int", 26),
        "ratio_max": _Opt("num", 0.5),
        "cross_check_dt": _Opt("num", 1e-3),
        "cross_check_tol": _Opt("num", 1e-4),
    },
}

EXPERIMENT_KINDS = tuple(sorted(_SCHEMAS))

_TOP_SCHEMA = {
    "experiment": _Opt("str", required=True, choices=EXPERIMENT_KINDS),
    "seed": _Opt("int", 0),
    "geometry": _Opt("obj", None),
    "params": _Opt("obj", {}),
}

_GEOMETRY_DEFAULTS = {
    "kernel-sweep": None,
    "vdc-oracle": None,
    "strichartz-fit": {"kind": "torus", "grid_sizes": [512]},
    "ons-sweep": {"kind": "torus", "grid_sizes": [512]},
    "duality-check": {"kind": "torus", "grid_sizes": [16]},
    "hartree-run": {"kind": "torus", "grid_sizes": [64]},
    "fixed-point": {"kind": "torus", "grid_sizes": [32]},
}


def _type_ok(value, typ: str) -> bool:
    if typ == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if typ == "float":
        return isinstance(value, float)
    if typ == "num":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if typ == "bool":
        return isinstance(value, bool)
    if typ == "str":
        return isinstance(value, str)
    if typ == "list-int":
        return isinstance(value, list) and all(_type_ok(v, "int") for v in value)
    if typ == "list-num":
        return isinstance(value, list) and all(_type_ok(v, "num") for v in value)
    if typ == "list-pair":
        return isinstance(value, list) and all(
            isinstance(v, list) and len(v) == 2 and isinstance(v[0], str)
            and _type_ok(v[1], "int") for v in value)
    if typ == "obj":
        return value is None or isinstance(value, dict)
    return False


def _apply_schema(obj: dict, schema: dict[str, _Opt], path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object", field=path)
    unknown = set(obj) - set(schema)
    if unknown:
        raise ConfigError(
            f"{path}: unknown key(s) {sorted(unknown)}", field=path)
    out = {}
    for key, opt in schema.items():
        if key in obj:
            val = obj[key]
            if not _type_ok(val, opt.typ):
                raise ConfigError(
                    f"{path}.{key}: expected {opt.typ}, got {val!r}",
                    field=f"{path}.{key}")
            if opt.choices and val not in opt.choices:
                raise ConfigError(
                    f"{path}.{key}: must be one of {opt.choices}, got {val!r}",
                    field=f"{path}.{key}")
            out[key] = val
        elif opt.required:
            raise ConfigError(f"{path}.{key}: required", field=f"{path}.{key}")
        else:
            out[key] = opt.default
    return out


def _build_geometry(cfg: dict | None, kind: str) -> GeometrySpec | None:
    if cfg is None:
        cfg = _GEOMETRY_DEFAULTS[kind]
    if cfg is None:
        return None
    g = _apply_schema(cfg, _GEOMETRY_SCHEMA, "geometry")
    try:
        return GeometrySpec(g["kind"], tuple(g["grid_sizes"]),
                            n_free=g["n_free"],
                            trunc_length=float(g["trunc_length"]))
    except Exception as exc:
        raise ConfigError(f"geometry: {exc}", field="geometry") from exc


def build_potential(cfg: dict) -> PotentialSpec:
    p = _apply_schema(cfg, _POTENTIAL_SCHEMA, "params.potential")
    try:
        return PotentialSpec(p["kind"], a=float(p["a"]),
                             sigma_w=float(p["sigma_w"]), k0=int(p["k0"]),
                             s=float(p["s"]), qprime=float(p["qprime"]))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"params.potential: {exc}",
                          field="params.potential") from exc


def validate_config(raw: dict) -> dict:
    """Validate a config dict; returns the fully-defaulted echo."""
    top = _apply_schema(raw, _TOP_SCHEMA, "config")
    kind = top["experiment"]
    params = _apply_schema(top["params"] or {}, _SCHEMAS[kind], "params")
    if "potential" in params:
        build_potential(params["potential"])  # validate eagerly
        params["potential"] = _apply_schema(
            params["potential"], _POTENTIAL_SCHEMA, "params.potential")
    geometry = _build_geometry(top["geometry"], kind)
    echo = {
        "experiment": kind,
        "seed": top["seed"],
        "geometry": None if geometry is None else {
            "kind": geometry.kind,
            "grid_sizes": list(geometry.grid_sizes),
            "n_free": geometry.n_free,
            "trunc_length": geometry.trunc_length,
        },
        "params": params,
    }
    return echo


def geometry_from_echo(echo: dict) -> GeometrySpec | None:
    g = echo.get("geometry")
    if g is None:
        return None
    return GeometrySpec(g["kind"], tuple(g["grid_sizes"]),
                        n_free=g["n_free"], trunc_length=g["trunc_length"])


def load_config(path: str) -> dict:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    return validate_config(raw)


def schema_document() -> dict:
    """Machine-readable schema of every experiment kind."""
    def render(schema):
        return {k: {"type": o.typ, "default": o.default,
                    "required": o.required,
                    **({"choices": list(o.choices)} if o.choices else {})}
                for k, o in schema.items()}

    return {
        "top_level": render(_TOP_SCHEMA),
        "geometry": render(_GEOMETRY_SCHEMA),
        "potential": render(_POTENTIAL_SCHEMA),
        "experiments": {k: render(s) for k, s in _SCHEMAS.items()},
        "geometry_defaults": _GEOMETRY_DEFAULTS,
    }
