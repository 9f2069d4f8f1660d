"""Command-line front end: kernel evaluation, vacuum estimates and overlap sweeps.

Exit codes: 0 success, 2 configuration error, 3 quadrature failure,
4 estimator failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .estimators import (
    RunOptions,
    diamagnetic_check,
    energy_from_mean,
    gamma_overlap,
    vacuum_expectation,
)
from .kernels import kernel_function
from .params import (
    ModelParams,
    NelsonMCError,
    QuadratureError,
    TableValidationError,
)
from .paths import TimeGrid
from .polaron import PolaronRun, polaron_diamagnetic_check, polaron_vacuum
from .tables import LogGrid, build_kernel_table, write_kernel_csv

EXIT_OK, EXIT_CONFIG, EXIT_QUADRATURE, EXIT_ESTIMATOR = 0, 2, 3, 4

ESTIMATE_COLUMNS = [
    "parameter", "value", "mean_re", "mean_im", "std_error", "energy", "modulus", "ok",
    "n_paths", "master_seed", "collision_events", "weight_cap_hits", "wall_time_s", "status",
]
GAMMA_COLUMNS = [
    "parameter", "value", "T", "gamma", "std_error", "lower_bound", "bound_satisfied",
    "n_paths", "master_seed", "weight_cap_hits", "wall_time_s", "status",
]

EPILOG = f"""\
CSV columns (estimate): {', '.join(ESTIMATE_COLUMNS)}
CSV columns (gamma):    {', '.join(GAMMA_COLUMNS)}
A sweep over P runs the pathwise diamagnetic check; 'ok' reports |V(P)| <= V(0)
and E(0) <= E(P).  Exit codes: 0 ok, 2 config, 3 quadrature, 4 estimator.
"""


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _error_code(exc: BaseException) -> int:
    if isinstance(exc, (QuadratureError, TableValidationError)):
        return EXIT_QUADRATURE
    return EXIT_ESTIMATOR


# -- configuration from flags -----------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (or a JSON summary to re-run)")
    p.add_argument("--model", choices=["nelson", "polaron"])
    p.add_argument("--d", type=int)
    p.add_argument("--g", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--P", help="comma separated momentum vector")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=JSON",
                   help="override any config key, value parsed as JSON")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    _add_model_flags(p)
    p.add_argument("--dt", type=float)
    p.add_argument("--n-paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--mode", choices=["direct", "renormalized"])
    p.add_argument("--tau", type=float)
    p.add_argument("--sweep", metavar="NAME=V1,V2,...",
                   help="sweep one parameter; for P separate vectors with ';'")
    p.add_argument("--no-crn", action="store_true",
                   help="use a different master seed per sweep point")
    p.add_argument("--out", help="output directory")
    p.add_argument("--prefix", help="output file prefix")


def build_config(args) -> dict:
    cfg = cfgmod.load(args.config) if getattr(args, "config", None) else cfgmod.resolve()
    flag_map = {
        "model": "model.model", "d": "model.d", "g": "model.g", "eps": "model.eps",
        "lam": "model.lam", "T": "model.T", "dt": "grid.dt", "n_paths": "mc.n_paths",
        "seed": "mc.master_seed", "workers": "mc.workers", "mode": "estimator.mode",
        "tau": "estimator.tau", "out": "output.directory", "prefix": "output.prefix",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            cfgmod.set_value(cfg, key, val)
    if getattr(args, "P", None):
        cfgmod.set_value(cfg, "model.P", _floats(args.P))
    if getattr(args, "d", None) is not None and getattr(args, "P", None) is None:
        P = cfg["model"]["P"]
        if P is not None and len(P) != args.d:
            cfgmod.set_value(cfg, "model.P", None)
    if getattr(args, "sweep", None):
        name, _, values = args.sweep.partition("=")
        if name == "P":
            vals = [_floats(v) for v in values.split(";") if v.strip()]
        else:
            vals = _floats(values)
        cfgmod.set_value(cfg, "sweep.parameter", name)
        cfgmod.set_value(cfg, "sweep.values", vals)
    if getattr(args, "no_crn", False):
        cfgmod.set_value(cfg, "sweep.common_random_numbers", False)
    for item in getattr(args, "set", []):
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfgmod.set_value(cfg, key, value)
    cfg.pop("schema_version", None)
    return cfgmod.resolve(cfg)


def sweep_points(cfg: dict) -> list[tuple[str | None, object, dict]]:
    """(parameter, value, point config) per sweep point; P sweeps stay whole."""
    sw = cfg["sweep"]
    name = sw["parameter"]
    if name is None or name == "P":
        return [(name, None, cfg)]
    points = []
    for i, v in enumerate(sw["values"]):
        c = copy.deepcopy(cfg)
        c["sweep"] = copy.deepcopy(cfgmod.DEFAULTS["sweep"])
        key = {"eps": "model.eps", "lam": "model.lam", "g": "model.g", "T": "model.T",
               "dt": "grid.dt", "tau": "estimator.tau"}[name]
        cfgmod.set_value(c, key, v)
        if not sw["common_random_numbers"]:
            c["mc"]["master_seed"] = cfg["mc"]["master_seed"] + i
        c.pop("schema_version", None)
        points.append((name, v, cfgmod.resolve(c)))
    return points


def time_grid(cfg: dict, two_sided: bool) -> TimeGrid:
    T = cfg["model"]["T"]
    if cfg["grid"]["N_half"] is not None:
        return TimeGrid(T, cfg["grid"]["N_half"], two_sided)
    try:
        return TimeGrid.from_dt(T, cfg["grid"]["dt"], two_sided)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_options(cfg: dict) -> RunOptions:
    m = cfg["mc"]
    return RunOptions(quad=cfgmod.quadrature(cfg), radii=cfgmod.table_spec(cfg),
                      use_tables=cfg["quadrature"]["use_tables"], workers=m["workers"],
                      batch_size=m["batch_size"], log_weight_cap=m["log_weight_cap"])


# -- output ----------------------------------------------------------------------------

def _summary(cfg: dict, result: dict) -> dict:
    out = {"kind": "summary", "schema_version": cfgmod.SCHEMA_VERSION}
    out.update(result)
    point_cfg = copy.deepcopy(cfg)
    out["config"] = point_cfg
    return out


def _write_outputs(cfg: dict, summaries: list[dict], rows: list[dict], columns: list[str]):
    outdir = Path(cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    prefix = cfg["output"]["prefix"]
    fmts = cfg["output"]["formats"]
    if "json" in fmts:
        for i, s in enumerate(summaries):
            name = f"{prefix}.json" if len(summaries) == 1 else f"{prefix}_{i:03d}.json"
            (outdir / name).write_text(cfgmod.dumps(s))
    if "csv" in fmts:
        with open(outdir / f"{prefix}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            w.writeheader()
            for row in rows:
                w.writerow({k: _csv_value(row.get(k)) for k in columns})


def _csv_value(v):
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, (list, tuple)):
        return " ".join("%.17g" % float(x) for x in v)
    return "" if v is None else v


# -- estimate ---------------------------------------------------------------------------

def _estimate_point(cfg: dict) -> tuple[dict, int]:
    params = cfgmod.model_params(cfg)
    opts = run_options(cfg)
    m = cfg["mc"]
    n, seed = m["n_paths"], m["master_seed"]
    polaron = params.model == "polaron"
    res = {
        "model": params.model, "params": params.as_dict(), "n_paths": n, "master_seed": seed,
        "mean_re": None, "mean_im": None, "std_error": None, "energy": None,
        "collision_events": 0 if polaron else None, "weight_cap_hits": 0,
    }
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        grid = time_grid(cfg, two_sided=not polaron)
        res["grid"] = {"T": grid.T, "N_half": grid.N_half, "dt": grid.dt,
                       "two_sided": grid.two_sided}
        if polaron:
            run = PolaronRun(params, grid, n, seed, m["r_min"])
            res["mode"] = run.mode
            est = polaron_vacuum(run, options=opts)
            res["collision_events"] = est.extra["collision_events"]
            horizon = 1.0
        else:
            res["mode"] = cfg["estimator"]["mode"]
            est = vacuum_expectation(params, res["mode"], grid, n, seed,
                                     cfg["estimator"]["tau"], opts)
            res["tau"] = est.extra["tau"]
            horizon = 2.0
        res.update(mean_re=est.mean_re, mean_im=est.mean_im, std_error=est.std_error,
                   params_fingerprint=est.params_fingerprint,
                   table_error_bounds=est.extra.get("table_error_bounds", {}))
        res["energy"] = energy_from_mean(est.mean_re, params.T, horizon)
        res["status"] = "ok"
    except ConfigError:
        raise
    except NelsonMCError as exc:
        code = _error_code(exc)
        res["status"] = "error"
        res["error"] = f"{type(exc).__name__}: {exc}"
        res["weight_cap_hits"] = getattr(exc, "hits", 0)
    res["wall_time_s"] = time.perf_counter() - t0
    return res, code


def _diamagnetic(cfg: dict) -> tuple[list[dict], dict, int]:
    params = cfgmod.model_params(cfg)
    opts = run_options(cfg)
    m = cfg["mc"]
    P_list = [tuple(v) for v in cfg["sweep"]["values"]]
    t0 = time.perf_counter()
    res = {"model": params.model, "params": params.as_dict(), "n_paths": m["n_paths"],
           "master_seed": m["master_seed"], "weight_cap_hits": 0}
    try:
        if params.model == "polaron":
            grid = time_grid(cfg, two_sided=False)
            run = PolaronRun(params, grid, m["n_paths"], m["master_seed"], m["r_min"])
            rep = polaron_diamagnetic_check(run, P_list, opts)
        else:
            grid = time_grid(cfg, two_sided=True)
            plist = [params.replace(P=P) for P in P_list]
            rep = diamagnetic_check(plist, grid, m["n_paths"], m["master_seed"],
                                    cfg["estimator"]["mode"], cfg["estimator"]["tau"], opts)
    except ConfigError:
        raise
    except NelsonMCError as exc:
        res.update(status="error", error=f"{type(exc).__name__}: {exc}",
                   weight_cap_hits=getattr(exc, "hits", 0))
        return [dict(res, parameter="P")], res, _error_code(exc)
    wall = time.perf_counter() - t0
    rows = []
    for row in rep.rows:
        rows.append({
            "parameter": "P", "value": list(row.P), "mean_re": row.mean.real,
            "mean_im": row.mean.imag, "modulus": row.modulus,
            "energy": row.energy if math.isfinite(row.energy) else None, "ok": row.ok,
            "n_paths": m["n_paths"], "master_seed": m["master_seed"], "collision_events": None,
            "weight_cap_hits": 0, "wall_time_s": wall, "status": "ok",
        })
    res.update(status="ok", v0=rep.v0, e0=rep.e0, all_ok=rep.ok, rows=rows, wall_time_s=wall)
    return rows, res, EXIT_OK


def cmd_estimate(args) -> int:
    cfg = build_config(args)
    if cfg["sweep"]["parameter"] == "P":
        rows, res, code = _diamagnetic(cfg)
        _write_outputs(cfg, [_summary(cfg, res)], rows, ESTIMATE_COLUMNS)
        for r in rows:
            print(f"P={r.get('value')} modulus={_fmt(r.get('modulus'))} "
                  f"energy={_fmt(r.get('energy'))} ok={r.get('ok')}")
        return code
    code = EXIT_OK
    summaries, rows = [], []
    for name, value, pcfg in sweep_points(cfg):
        res, c = _estimate_point(pcfg)
        code = max(code, c)
        res["parameter"], res["value"] = name, value
        summaries.append(_summary(pcfg, res))
        rows.append(res)
        label = f"{name}={value} " if name else ""
        print(f"{label}mean={_fmt(res['mean_re'])}{_fmt_im(res['mean_im'])} "
              f"se={_fmt(res['std_error'])} status={res['status']}"
              + (f" ({res['error']})" if res["status"] != "ok" else ""))
    _write_outputs(cfg, summaries, rows, ESTIMATE_COLUMNS)
    return code


def _fmt(v):
    return "nan" if v is None else "%.10g" % v


def _fmt_im(v):
    return "" if v is None else ("%+.3gi" % v)


# -- gamma ------------------------------------------------------------------------------

def cmd_gamma(args) -> int:
    cfg = build_config(args)
    params = cfgmod.model_params(cfg)
    if params.model != "nelson":
        raise ConfigError("gamma(T) is computed for the Nelson model")
    if any(p != 0 for p in params.P):
        raise ConfigError("gamma(T) requires P = 0")
    if cfg["sweep"]["parameter"] == "P":
        raise ConfigError("gamma(T) cannot sweep P")
    code = EXIT_OK
    summaries, rows = [], []
    for name, value, pcfg in sweep_points(cfg):
        p = cfgmod.model_params(pcfg)
        m = pcfg["mc"]
        res = {"model": "nelson", "params": p.as_dict(), "T": p.T, "n_paths": m["n_paths"],
               "master_seed": m["master_seed"], "gamma": None, "std_error": None,
               "lower_bound": None, "bound_satisfied": None, "weight_cap_hits": 0,
               "parameter": name, "value": value}
        t0 = time.perf_counter()
        try:
            grid = time_grid(pcfg, two_sided=True)
            est = gamma_overlap(p, grid, m["n_paths"], m["master_seed"], run_options(pcfg))
            bound = est.extra["lower_bound"]
            res.update(gamma=float(est.mean), std_error=est.std_error, lower_bound=bound,
                       bound_satisfied=bool(est.mean + 3 * est.std_error >= bound),
                       params_fingerprint=est.params_fingerprint, status="ok")
        except ConfigError:
            raise
        except NelsonMCError as exc:
            code = max(code, _error_code(exc))
            res.update(status="error", error=f"{type(exc).__name__}: {exc}",
                       weight_cap_hits=getattr(exc, "hits", 0))
        res["wall_time_s"] = time.perf_counter() - t0
        summaries.append(_summary(pcfg, res))
        rows.append(res)
        print(f"T={p.T:g} gamma={_fmt(res['gamma'])} se={_fmt(res['std_error'])} "
              f"bound={_fmt(res['lower_bound'])} ok={res['bound_satisfied']} "
              f"status={res['status']}")
    _write_outputs(cfg, summaries, rows, GAMMA_COLUMNS)
    return code


# -- kernels ----------------------------------------------------------------------------

def _closed_form_checks(params: ModelParams, kernel: str, quad) -> list[tuple[str, float, float]]:
    checks = []
    f = kernel_function(kernel)
    eps, lam = params.eps, params.lam
    if kernel == "W" and params.d == 3 and eps > 0:
        checks.append(("W(0,0) = (pi/eps) exp(-eps lam^2)", f(0.0, 0.0, params, quad),
                       math.pi / eps * math.exp(-eps * lam * lam)))
    if kernel == "rho" and params.d == 2 and eps == 0:
        checks.append(("rho(0,0) = pi ln((lam+2)/lam)", f(0.0, 0.0, params, quad),
                       math.pi * math.log((lam + 2) / lam)))
    if kernel == "polaron" and eps == 0 and lam == 0:
        for r in (0.5, 1.0, 2.0):
            checks.append((f"W_pol({r:g},0) = pi^2/r", f(r, 0.0, params, quad), math.pi**2 / r))
    return checks


def cmd_kernels(args) -> int:
    if args.kernel == "polaron":
        args.model = "polaron"
    cfg = build_config(args)
    params = cfgmod.model_params(cfg)
    quad = cfgmod.quadrature(cfg)
    f = kernel_function(args.kernel)
    try:
        for at in args.at:
            r, t = _floats(at)
            val = f(r, t, params, quad)
            print(f"{args.kernel}(r={r:.17g}, t={t:.17g}) = {val:.17g}")
        for name, got, want in _closed_form_checks(params, args.kernel, quad):
            rel = abs(got - want) / abs(want)
            print(f"check {name}: computed={got:.17g} expected={want:.17g} rel_err={rel:.3g}")
        if args.csv:
            r = np.linspace(*_range(args.r_range))
            t = _floats(args.t_values)
            write_kernel_csv(args.csv, args.kernel, params, r, t, quad)
            print(f"wrote {args.csv}")
        if args.table:
            r0, r1, nr = _range(args.r_range, log=True)
            t0, t1, nt = _range(args.tau_range, log=True)
            grid = LogGrid(r0, r1, t0, t1, nr, nt)
            table = build_kernel_table(params, args.kernel, grid, quad,
                                       max_error=args.max_error)
            table.save(args.table)
            print(f"wrote {args.table} (interp_error_bound={table.interp_error_bound:.3g})")
    except (QuadratureError, TableValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE
    except NelsonMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    return EXIT_OK


def _range(text: str, log: bool = False):
    lo, hi, n = text.split(",")
    return float(lo), float(hi), int(n)


# -- entry point ------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nelsonmc", description="Path-integral Monte Carlo for the Nelson and polaron models.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernels", help="evaluate or tabulate pair kernels",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="CSV columns: r, t, value")
    _add_model_flags(k)
    k.add_argument("--kernel", required=True, choices=["W", "rho", "drho", "polaron"])
    k.add_argument("--at", action="append", default=[], metavar="R,T",
                   help="print the kernel at radius R and time gap T (repeatable)")
    k.add_argument("--csv", help="write kernel values on r-range x t-values to this CSV")
    k.add_argument("--r-range", default="0.001,10,256", metavar="LO,HI,N")
    k.add_argument("--tau-range", default="0.001,4,256", metavar="LO,HI,N")
    k.add_argument("--t-values", default="0", metavar="T1,T2,...")
    k.add_argument("--table", help="build a log-log KernelTable and save it (.npz)")
    k.add_argument("--max-error", type=float, help="fail if the table error exceeds this")
    k.set_defaults(func=cmd_kernels)

    e = sub.add_parser("estimate", help="vacuum expectation / energy estimates",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_run_flags(e)
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("gamma", help="ground-state overlap gamma(T) with its lower bound",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_run_flags(g)
    g.set_defaults(func=cmd_gamma)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, TableValidationError) as exc:
        print(f"quadrature error: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE
    except NelsonMCError as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
