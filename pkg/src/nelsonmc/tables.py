"""Precomputed kernel tables with cubic interpolation.

Two layouts are supported:

``LogGrid``
    logarithmic grids in both r and the time gap, bicubic spline in
    (log r, log tau).  General purpose.
``LagGrid``
    the time-gap axis is the exact set of lags ``k * dt`` of a path grid, so
    only the radius needs interpolating (natural for the estimators, whose
    time gaps are always grid multiples).  The radius grid is log spaced near
    zero and uniform further out.

Probes outside the grid hull are evaluated by calling the kernel directly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .kernels import kernel_function
from .params import ModelParams, QuadratureConfig, TableSpec, TableValidationError
from .quadrature import DEFAULT_QUAD

TABLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LogGrid:
    r_min: float = 1e-3
    r_max: float = 10.0
    tau_min: float = 1e-3
    tau_max: float = 4.0
    n_r: int = 256
    n_tau: int = 256


@dataclass(frozen=True)
class LagGrid:
    dt: float
    lags: tuple[int, ...]
    span: float
    radii: TableSpec = field(default_factory=TableSpec)

    @classmethod
    def for_path_grid(cls, dt: float, max_lag: int, span: float, radii: TableSpec | None = None,
                      min_lag: int = 1):
        return cls(dt=dt, lags=tuple(range(min_lag, max_lag + 1)), span=span,
                   radii=radii or TableSpec())


class KernelTable:
    """Immutable table of one kernel on an (r, tau) grid."""

    def __init__(self, kernel_id: str, params: ModelParams, r_grid, tau_grid, values,
                 kind: str, quad: QuadratureConfig | None = None, dt: float | None = None,
                 lags=None, interp_error_bound: float = math.nan):
        self.kernel_id = kernel_id
        self.params = params
        self.quad = quad or DEFAULT_QUAD
        self.r_grid = np.asarray(r_grid, dtype=float)
        self.tau_grid = np.asarray(tau_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.kind = kind
        self.dt = dt
        self.lags = None if lags is None else np.asarray(lags, dtype=int)
        self.interp_error_bound = interp_error_bound
        for arr in (self.r_grid, self.tau_grid, self.values):
            arr.setflags(write=False)
        if kind == "lags":
            spline = CubicSpline(self.r_grid, self.values, axis=0)
            self._coef = np.ascontiguousarray(np.moveaxis(spline.c, 2, 0))  # (col, 4, n_r - 1)
            self._lag0 = int(self.lags[0])
        elif kind == "log":
            self._spline = RectBivariateSpline(
                np.log(self.r_grid), np.log(self.tau_grid), self.values, kx=3, ky=3, s=0
            )
        else:
            raise ValueError(f"unknown table kind {kind!r}")

    # -- evaluation -------------------------------------------------------

    @property
    def r_hull(self) -> tuple[float, float]:
        return float(self.r_grid[0]), float(self.r_grid[-1])

    def direct(self, r, tau):
        return kernel_function(self.kernel_id)(r, tau, self.params, self.quad)

    def at_lag(self, r, lag: int) -> np.ndarray:
        """Interpolated kernel at time gap ``lag * dt`` for an array of radii."""
        if self.kind != "lags":
            raise TypeError("at_lag needs a lag-aligned table")
        col = lag - self._lag0
        if not 0 <= col < self._coef.shape[0]:
            raise IndexError(f"lag {lag} not tabulated")
        r = np.asarray(r, dtype=float)
        grid = self.r_grid
        idx = np.searchsorted(grid, r, side="right") - 1
        np.clip(idx, 0, grid.size - 2, out=idx)
        x = r - grid[idx]
        c = self._coef[col][:, idx]
        out = ((c[0] * x + c[1]) * x + c[2]) * x + c[3]
        outside = (r < grid[0]) | (r > grid[-1])
        if outside.any():
            out[outside] = self._fallback(r[outside], float(self.tau_grid[col]))
        return out

    def _fallback(self, r, tau):
        uniq, inv = np.unique(r, return_inverse=True)
        return np.asarray(self.direct(uniq, tau), dtype=float)[inv]

    def __call__(self, r, tau):
        scalar = np.ndim(r) == 0 and np.ndim(tau) == 0
        r, tau = np.broadcast_arrays(np.asarray(r, float), np.abs(np.asarray(tau, float)))
        out = np.empty(r.shape)
        if self.kind == "lags":
            k = np.rint(tau / self.dt).astype(int) if self.dt else np.zeros(r.shape, int)
            on_lag = np.isclose(k * (self.dt or 0.0), tau, rtol=1e-12, atol=1e-15)
            on_lag &= (k >= self.lags[0]) & (k <= self.lags[-1])
            for lag in np.unique(k[on_lag]):
                sel = on_lag & (k == lag)
                out[sel] = self.at_lag(r[sel], int(lag))
            off = ~on_lag
        else:
            inside = (
                (r >= self.r_grid[0]) & (r <= self.r_grid[-1])
                & (tau >= self.tau_grid[0]) & (tau <= self.tau_grid[-1])
            )
            if inside.any():
                out[inside] = self._spline.ev(np.log(r[inside]), np.log(tau[inside]))
            off = ~inside
        if off.any():
            out[off] = np.asarray(self.direct(r[off], tau[off]), dtype=float)
        return float(out) if scalar else out

    # -- validation -------------------------------------------------------

    def validate(self, n_probes: int = 1000, seed: int = 0) -> float:
        """Max relative interpolation error over random in-hull probes.

        Errors are scaled by ``|f| + 1e-6 * max|table|`` so sign changes of
        the kernel do not produce meaningless ratios.
        """
        rng = np.random.default_rng(seed)
        lo, hi = self.r_hull
        r = np.exp(rng.uniform(math.log(lo), math.log(hi), n_probes))
        if self.kind == "lags":
            cols = rng.integers(0, self.tau_grid.size, n_probes)
            tau = self.tau_grid[cols]
        else:
            tau = np.exp(rng.uniform(math.log(self.tau_grid[0]), math.log(self.tau_grid[-1]),
                                     n_probes))
        approx = self(r, tau)
        exact = np.empty(n_probes)
        for tv in np.unique(tau):
            sel = tau == tv
            exact[sel] = self.direct(r[sel], tv)
        scale = np.abs(exact) + 1e-6 * float(np.max(np.abs(self.values)))
        return float(np.max(np.abs(approx - exact) / scale))

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            format_version=TABLE_FORMAT_VERSION,
            kernel_id=self.kernel_id,
            kind=self.kind,
            params=np.array(repr(self.params.as_dict())),
            r_grid=self.r_grid,
            tau_grid=self.tau_grid,
            values=self.values,
            dt=np.nan if self.dt is None else self.dt,
            lags=np.array([] if self.lags is None else self.lags, dtype=int),
            interp_error_bound=self.interp_error_bound,
        )

    @classmethod
    def load(cls, path, quad: QuadratureConfig | None = None) -> "KernelTable":
        import ast

        with np.load(path, allow_pickle=False) as z:
            if int(z["format_version"]) != TABLE_FORMAT_VERSION:
                raise ValueError("unsupported kernel table format version")
            pdict = ast.literal_eval(str(z["params"]))
            params = ModelParams(**pdict)
            dt = float(z["dt"])
            lags = z["lags"]
            return cls(
                str(z["kernel_id"]), params, z["r_grid"], z["tau_grid"], z["values"],
                str(z["kind"]), quad=quad, dt=None if math.isnan(dt) else dt,
                lags=lags if lags.size else None,
                interp_error_bound=float(z["interp_error_bound"]),
            )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "t", "value"])
            for j, tau in enumerate(self.tau_grid):
                for i, r in enumerate(self.r_grid):
                    w.writerow([f"{r:.17g}", f"{tau:.17g}", f"{self.values[i, j]:.17g}"])


def build_kernel_table(params: ModelParams, kernel_id: str, grid: LogGrid | LagGrid,
                       quad: QuadratureConfig | None = None, *, n_probes: int = 1000,
                       max_error: float | None = None, seed: int = 0) -> KernelTable:
    """Tabulate a kernel and measure its interpolation error on random probes."""
    quad = quad or DEFAULT_QUAD
    f = kernel_function(kernel_id)
    if isinstance(grid, LogGrid):
        r_grid = np.geomspace(grid.r_min, grid.r_max, grid.n_r)
        tau_grid = np.geomspace(grid.tau_min, grid.tau_max, grid.n_tau)
        kind, dt, lags = "log", None, None
    else:
        r_grid = grid.radii.r_grid(grid.span)
        lags = np.asarray(grid.lags, dtype=int)
        if lags.size == 0 or np.any(np.diff(lags) != 1):
            raise ValueError("lags must be a non-empty contiguous range")
        tau_grid = lags * grid.dt
        kind, dt = "lags", grid.dt
    values = np.empty((r_grid.size, tau_grid.size))
    for j, tau in enumerate(tau_grid):
        values[:, j] = f(r_grid, tau, params, quad)
    table = KernelTable(kernel_id, params, r_grid, tau_grid, values, kind, quad=quad,
                        dt=dt, lags=lags)
    if n_probes:
        table.interp_error_bound = table.validate(n_probes, seed)
        if max_error is not None and table.interp_error_bound > max_error:
            raise TableValidationError(
                f"{kernel_id} table interpolation error {table.interp_error_bound:.3g}"
                f" exceeds {max_error:.3g}"
            )
    return table


def write_kernel_csv(path, kernel_id: str, params: ModelParams, r, t,
                     quad: QuadratureConfig | None = None) -> None:
    """Write kernel values on the tensor grid r x t as CSV rows (r, t, value)."""
    f = kernel_function(kernel_id)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "t", "value"])
        for tv in t:
            vals = np.atleast_1d(f(np.asarray(r, float), tv, params, quad))
            for rv, val in zip(r, vals):
                w.writerow([f"{rv:.17g}", f"{tv:.17g}", f"{val:.17g}"])


class LagKernels:
    """Kernel values at grid lags ``k * dt``, from tables or direct quadrature.

    Tables are built on first use and cover lags 1..max_lag (or lag 0 only for
    the polaron radial profile, see ``polaron``).  With ``use_tables=False``
    every lookup calls the kernel directly; that mode exists to verify the
    tabulated path.
    """

    def __init__(self, params: ModelParams, dt: float, max_lag: int, span: float,
                 quad: QuadratureConfig | None = None, radii: TableSpec | None = None,
                 use_tables: bool = True, n_probes: int = 1000):
        self.params = params
        self.dt = dt
        self.max_lag = max_lag
        self.span = span
        self.quad = quad or DEFAULT_QUAD
        self.radii = radii or TableSpec()
        self.use_tables = use_tables
        self.n_probes = n_probes
        self.tables: dict[str, KernelTable] = {}

    def table(self, kernel_id: str) -> KernelTable:
        if kernel_id not in self.tables:
            grid = LagGrid.for_path_grid(self.dt, self.max_lag, self.span, self.radii)
            self.tables[kernel_id] = build_kernel_table(
                self.params, kernel_id, grid, self.quad, n_probes=self.n_probes
            )
        return self.tables[kernel_id]

    def prepare(self, *kernel_ids: str) -> "LagKernels":
        if self.use_tables:
            for kid in kernel_ids:
                self.table(kid)
        return self

    def at_lag(self, kernel_id: str, r: np.ndarray, lag: int) -> np.ndarray:
        if self.use_tables:
            return self.table(kernel_id).at_lag(r, lag)
        flat = np.asarray(r, dtype=float).ravel()
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.asarray(kernel_function(kernel_id)(uniq, lag * self.dt, self.params,
                                                     self.quad), dtype=float)
        return vals[inv].reshape(np.shape(r))

    def error_bounds(self) -> dict[str, float]:
        return {k: t.interp_error_bound for k, t in self.tables.items()}
