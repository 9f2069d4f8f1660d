"""Run configuration: JSON schema, defaults, validation and serialization.

A configuration file is a JSON object with ``schema_version`` and any of the
sections below.  Every key has a default; unknown keys are rejected.

    model       model, d, g, lam, eps, P, T
    grid        dt (or N_half, which wins when set)
    mc          n_paths, master_seed, log_weight_cap, r_min, workers, batch_size
    estimator   mode ("direct" | "renormalized"; ignored by the polaron), tau
    quadrature  abs_tol, rel_tol, panel_order, max_panels, oscillation_splitting,
                max_envelope_decay, use_tables, table (TableSpec fields)
    sweep       parameter, values, common_random_numbers
    output      directory, prefix, formats
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import fields
from pathlib import Path

from .params import ModelParams, QuadratureConfig, TableSpec

SCHEMA_VERSION = 1

SWEEPABLE = ("eps", "lam", "g", "T", "dt", "P", "tau")


class ConfigError(ValueError):
    """Invalid configuration (exit code 2)."""


def _defaults() -> dict:
    quad = {f.name: f.default for f in fields(QuadratureConfig)}
    table = {f.name: f.default for f in fields(TableSpec)}
    return {
        "schema_version": SCHEMA_VERSION,
        "model": {"model": "nelson", "d": 3, "g": 0.0, "lam": 1.0, "eps": 0.5, "P": None,
                  "T": 1.0},
        "grid": {"dt": 1.0 / 64, "N_half": None},
        "mc": {"n_paths": 10_000, "master_seed": 0, "log_weight_cap": 700.0, "r_min": None,
               "workers": 1, "batch_size": 256},
        "estimator": {"mode": "renormalized", "tau": None},
        "quadrature": {**quad, "use_tables": True, "table": table},
        "sweep": {"parameter": None, "values": [], "common_random_numbers": True},
        "output": {"directory": ".", "prefix": "run", "formats": ["json", "csv"]},
    }


DEFAULTS = _defaults()


def _merge(base: dict, update: dict, path: str = "") -> None:
    for key, val in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be an object")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def resolve(user: dict | None = None) -> dict:
    """Defaults overlaid with ``user``; raises ConfigError on unknown keys."""
    cfg = copy.deepcopy(DEFAULTS)
    user = dict(user or {})
    version = user.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    _merge(cfg, user)
    validate(cfg)
    return cfg


def load(path) -> dict:
    """Read a config file, or the embedded config of a JSON summary."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if data.get("kind") == "summary":
        data = data["config"]
    return resolve(data)


def set_value(cfg: dict, dotted: str, value) -> None:
    """Override ``section.key`` in a resolved config."""
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown configuration key '{dotted}'")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key '{dotted}'")
    node[parts[-1]] = value


def _finite(name, v, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number")
    if positive and not v > 0:
        raise ConfigError(f"{name} must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{name} must be >= 0")


def validate(cfg: dict) -> None:
    try:
        params = model_params(cfg)
        quadrature(cfg)
        table_spec(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    g = cfg["grid"]
    if g["N_half"] is None:
        _finite("grid.dt", g["dt"], positive=True)
    elif not isinstance(g["N_half"], int) or g["N_half"] < 1:
        raise ConfigError("grid.N_half must be a positive integer")
    m = cfg["mc"]
    if not isinstance(m["n_paths"], int) or m["n_paths"] < 2:
        raise ConfigError("mc.n_paths must be an integer >= 2")
    if not isinstance(m["master_seed"], int) or not 0 <= m["master_seed"] < 2**64:
        raise ConfigError("mc.master_seed must be an integer in [0, 2^64)")
    _finite("mc.log_weight_cap", m["log_weight_cap"], positive=True)
    if m["r_min"] is not None:
        _finite("mc.r_min", m["r_min"], positive=True)
    for key in ("workers", "batch_size"):
        if not isinstance(m[key], int) or m[key] < 1:
            raise ConfigError(f"mc.{key} must be a positive integer")
    if cfg["estimator"]["mode"] not in ("direct", "renormalized"):
        raise ConfigError("estimator.mode must be 'direct' or 'renormalized'")
    if cfg["estimator"]["tau"] is not None:
        _finite("estimator.tau", cfg["estimator"]["tau"], positive=True)
    sw = cfg["sweep"]
    if sw["parameter"] is not None:
        if sw["parameter"] not in SWEEPABLE:
            raise ConfigError(f"sweep.parameter must be one of {SWEEPABLE}")
        if not isinstance(sw["values"], list) or not sw["values"]:
            raise ConfigError("sweep.values must be a non-empty list")
        for v in sw["values"]:
            if sw["parameter"] == "P":
                if not isinstance(v, list) or len(v) != params.d:
                    raise ConfigError(f"sweep values for P must be {params.d}-vectors")
                for c in v:
                    _finite("sweep value", c)
            else:
                positive = sw["parameter"] in ("T", "dt", "tau")
                _finite("sweep value", v, positive=positive,
                        nonneg=sw["parameter"] in ("eps", "lam"))
    fmts = cfg["output"]["formats"]
    if not isinstance(fmts, list) or not set(fmts) <= {"json", "csv"}:
        raise ConfigError("output.formats must be a subset of ['json', 'csv']")


def model_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    P = None if m["P"] is None else tuple(m["P"])
    return ModelParams(d=m["d"], g=m["g"], lam=m["lam"], eps=m["eps"], P=P, T=m["T"],
                       model=m["model"])


def quadrature(cfg: dict) -> QuadratureConfig:
    q = {k: v for k, v in cfg["quadrature"].items() if k not in ("use_tables", "table")}
    return QuadratureConfig(**q)


def table_spec(cfg: dict) -> TableSpec:
    return TableSpec(**cfg["quadrature"]["table"])


# -- JSON output with 17 significant digits ------------------------------------------

def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return "%.17g" % obj if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _encode(obj.item(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written as %.17g (non-finite floats as null)."""
    return _encode(obj, indent, 0) + "\n"
