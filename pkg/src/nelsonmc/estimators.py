"""Path actions and Monte Carlo estimators for the Nelson model.

Discretization conventions (uniform grid, nodes 0..N on [-T, T]):

* double time integrals use the left-rectangle rule over nodes 0..N-1, so a
  pair at lag k carries weight dt^2 and every lag k >= 1 appears twice;
* the diagonal (lag 0) is included when the kernel is finite there and
  skipped when it is not (eps = 0);
* Ito integrals use the left endpoint of each increment.

Batch functions work on position arrays of shape (batch, N + 1, d).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import mc
from .kernels import gamma_lower_bound, pair_potential_W, rho_diag
from .params import (
    EstimatorError,
    KernelDomainError,
    ModelParams,
    ProfileError,
    QuadratureConfig,
    TableSpec,
    fingerprint,
)
from .paths import BrownianPath, TimeGrid
from .quadrature import DEFAULT_QUAD, radial_integral
from .tables import LagKernels

MODES = ("direct", "renormalized")


@dataclass(frozen=True)
class RenormalizedAction:
    off_diagonal: float
    stochastic: float
    boundary: float
    tau: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.off_diagonal + self.stochastic + self.boundary)


# -- helpers -----------------------------------------------------------------

def _norms(D: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", D, D))


def _check_nelson(params: ModelParams) -> None:
    if params.model != "nelson":
        raise ValueError("this estimator is for the Nelson model")


def diagonal_included(params: ModelParams) -> bool:
    """Whether W_eps(0, 0) is finite, i.e. the lag-0 terms enter the double sum."""
    return params.eps > 0


def window_lags(tau: float, grid: TimeGrid) -> int:
    """Number of grid steps L = tau / dt of the Ito window."""
    if not 0 < tau <= 2 * grid.T * (1 + 1e-12):
        raise KernelDomainError("tau must lie in (0, 2T]")
    L = tau / grid.dt
    if abs(L - round(L)) > 1e-9 * max(L, 1.0) or round(L) < 1:
        raise KernelDomainError("tau must be a positive multiple of the grid step")
    return int(round(L))


def make_kernels(params: ModelParams, grid: TimeGrid, quad: QuadratureConfig | None = None,
                 radii: TableSpec | None = None, use_tables: bool = True) -> LagKernels:
    return LagKernels(params, grid.dt, grid.n_steps, grid.span, quad, radii, use_tables)


def _direct_kernels(params, grid, kernels):
    return kernels if kernels is not None else make_kernels(params, grid, use_tables=False)


# -- batch actions -------------------------------------------------------------

def direct_action_batch(X: np.ndarray, dt: float, kernels: LagKernels, w_diag: float | None,
                        split: int | None = None):
    """dt^2 sum_{i,j<N} W(B_i - B_j, (i-j) dt) per path.

    With ``split = h`` also returns the cross sum over pairs i < h <= j
    (one ordering only), used by the overlap estimator.
    """
    N = X.shape[1] - 1
    S = np.zeros(X.shape[0])
    C = np.zeros(X.shape[0]) if split is not None else None
    for k in range(1, N):
        vals = kernels.at_lag("W", _norms(X[:, k:N] - X[:, :N - k]), k)
        S += vals.sum(axis=1)
        if split is not None and k >= 1:
            lo = max(0, split - k)
            hi = min(split, N - k)
            if hi > lo:
                C += vals[:, lo:hi].sum(axis=1)
    S = 2.0 * dt * dt * S
    if w_diag is not None:
        S += N * dt * dt * w_diag
    if split is None:
        return S
    return S, dt * dt * C


def renormalized_action_batch(X: np.ndarray, dt: float, L: int, kernels: LagKernels):
    """Off-diagonal, Ito and boundary parts of the renormalized action per path."""
    B, n, d = X.shape
    N = n - 1
    # Ito part: G_i = dt * sum_{i-L < j < i} grad rho(B_i - B_j, (i-j) dt)
    G = np.zeros((B, N, d))
    for k in range(1, min(L, N + 1)):
        D = X[:, k:N] - X[:, :N - k]
        r = _norms(D)
        # coincident points carry no gradient (r * d_r rho -> 0)
        pos = r > 0
        scale = np.zeros_like(r)
        if pos.any():
            scale[pos] = kernels.at_lag("drho", r[pos], k) / r[pos]
        G[:, k:N] += D * scale[..., None]
    dB = np.diff(X, axis=1)
    stochastic = 2.0 * dt * np.einsum("bid,bid->b", G, dB)
    # boundary: -2 dt sum_j rho(B_u - B_j, (u - j) dt) with u = min(j + L, N)
    boundary = np.zeros(B)
    n_full = N - L + 1  # nodes j = 0..N-L reach j + L
    if n_full > 0:
        r = _norms(X[:, L:N + 1] - X[:, :n_full])
        boundary += kernels.at_lag("rho", r, L).sum(axis=1)
    for j in range(max(n_full, 0), N):
        r = _norms(X[:, N] - X[:, j])
        boundary += kernels.at_lag("rho", r, N - j)
    boundary *= -2.0 * dt
    # off-diagonal: pairs at lag >= L
    od = np.zeros(B)
    for k in range(L, N):
        od += kernels.at_lag("W", _norms(X[:, k:N] - X[:, :N - k]), k).sum(axis=1)
    od *= 2.0 * dt * dt
    return od, stochastic, boundary


# -- per-path actions ------------------------------------------------------------

def action_direct(path: BrownianPath, params: ModelParams, kernels: LagKernels | None = None,
                  quad: QuadratureConfig | None = None) -> float:
    """Riemann double sum of W_eps over [-T, T]^2 for one path."""
    _check_nelson(params)
    grid = path.grid
    kernels = _direct_kernels(params, grid, kernels)
    w_diag = float(pair_potential_W(0.0, 0.0, params, quad)) if diagonal_included(params) else None
    return float(direct_action_batch(path.positions[None], grid.dt, kernels, w_diag)[0])


def action_renormalized(path: BrownianPath, params: ModelParams, tau: float | None = None,
                        kernels: LagKernels | None = None) -> RenormalizedAction:
    """Renormalized action split into off-diagonal, Ito and boundary parts."""
    _check_nelson(params)
    grid = path.grid
    tau = 2.0 * grid.T if tau is None else tau
    L = window_lags(tau, grid)
    kernels = _direct_kernels(params, grid, kernels)
    od, st, bd = renormalized_action_batch(path.positions[None], grid.dt, L, kernels)
    return RenormalizedAction(float(od[0]), float(st[0]), float(bd[0]), tau)


# -- coherent-state functional ------------------------------------------------------

@dataclass(frozen=True)
class RadialProfile:
    """Radial momentum profile k -> rho_hat(k), negligible beyond ``k_max``."""

    func: Callable[[np.ndarray], np.ndarray]
    k_max: float


@dataclass(frozen=True)
class _Gaussian:
    amplitude: float
    width: float

    def __call__(self, k):
        return self.amplitude * np.exp(-0.5 * (np.asarray(k) / self.width) ** 2)


def gaussian_profile(amplitude: float = 1.0, width: float = 1.0) -> RadialProfile:
    """rho_hat(k) = amplitude * exp(-k^2 / (2 width^2))."""
    return RadialProfile(_Gaussian(amplitude, width), width * math.sqrt(2 * 40.0))


def _profile_integral(m, t, profile: RadialProfile, lower: float, r=None, quad=None):
    t = np.asarray(t, dtype=float)
    osc = None if r is None else "sinc"
    r = np.zeros_like(t) if r is None else r
    return radial_integral(m, r, t, eps=0.0, lower=lower, osc=osc, tail_coef=0.0,
                           tail_power=0.0, quad=quad, k_max=profile.k_max)


def profile_overlap(p1: RadialProfile, p2: RadialProfile, t: float = 0.0,
                    quad: QuadratureConfig | None = None) -> float:
    """(rho1 / sqrt(omega), e^{-t omega} rho2 / sqrt(omega)) over all of R^3."""
    k_max = max(p1.k_max, p2.k_max)
    prof = RadialProfile(p1.func, k_max)
    m = lambda k: 4.0 * math.pi * k * np.conj(p1.func(k)) * p2.func(k)
    val = float(_profile_integral(m, np.array([t]), prof, 0.0, quad=quad)[0])
    if not math.isfinite(val):
        raise ProfileError("profile is not square integrable against 1/omega")
    return val


def _check_profile(p: RadialProfile) -> float:
    norm = profile_overlap(p, p)
    tail = p.k_max * abs(complex(p.func(np.array([p.k_max]))[0])) ** 2
    if tail > 1e-14 * max(norm, 1e-300) and tail > 1e-300:
        raise ProfileError("profile does not decay before k_max")
    return norm


def _path_terms(X: np.ndarray, grid: TimeGrid, params: ModelParams, p: RadialProfile,
                late: bool, quad) -> np.ndarray:
    """dt * sum_s int_{|k|>=lam} rho(k)/sqrt(k) e^{-|s -/+ T| k} e^{-ik.B_s} dk."""
    N = grid.n_steps
    s = grid.nodes[:N]
    t = (grid.T - s) if late else (s + grid.T)
    r = _norms(X[:, :N])
    tt = np.broadcast_to(t, r.shape)
    m = lambda k: 4.0 * math.pi * k**1.5 * p.func(k)
    vals = radial_integral(m, r, tt, eps=0.0, lower=params.lam, osc="sinc", tail_coef=0.0,
                           tail_power=0.0, quad=quad, k_max=p.k_max)
    return grid.dt * vals.sum(axis=1)


def coherent_xi_batch(X, grid: TimeGrid, alpha: complex, beta: complex, rho1: RadialProfile,
                      rho2: RadialProfile, params: ModelParams, quad=None) -> np.ndarray:
    a_bar = np.conj(alpha)
    n1 = profile_overlap(rho1, rho1, 0.0, quad)
    n2 = profile_overlap(rho2, rho2, 0.0, quad)
    c12 = profile_overlap(rho1, rho2, 2.0 * grid.T, quad)
    xi = np.full(X.shape[0], a_bar**2 * n1 + beta**2 * n2 + 2 * a_bar * beta * c12, complex)
    if params.g != 0 and alpha != 0:
        xi += 2 * a_bar * params.g * _path_terms(X, grid, params, rho1, True, quad)
    if params.g != 0 and beta != 0:
        xi += 2 * beta * params.g * _path_terms(X, grid, params, rho2, False, quad)
    return xi


def coherent_xi(path: BrownianPath, alpha: complex, beta: complex, rho1: RadialProfile,
                rho2: RadialProfile, params: ModelParams,
                quad: QuadratureConfig | None = None) -> complex:
    """Exponent xi of the coherent-state matrix element for one path."""
    if params.d != 3:
        raise ValueError("coherent states are implemented for d = 3")
    _check_profile(rho1)
    _check_profile(rho2)
    return complex(coherent_xi_batch(path.positions[None], path.grid, alpha, beta, rho1, rho2,
                                     params, quad)[0])


# -- evaluators (picklable, run inside workers) ------------------------------------

@dataclass
class NelsonEvaluator:
    params: ModelParams
    grid: TimeGrid
    mode: str
    L: int
    kernels: LagKernels | None
    w_diag: float | None
    coherent: tuple | None = None

    def __call__(self, X):
        p = self.params
        dB = X[:, -1] - X[:, 0]
        phase = dB @ p.P_array
        if p.g == 0:
            logw = np.zeros(X.shape[0])
        elif self.mode == "direct":
            logw = 0.5 * p.g**2 * direct_action_batch(X, self.grid.dt, self.kernels, self.w_diag)
        else:
            od, st, bd = renormalized_action_batch(X, self.grid.dt, self.L, self.kernels)
            logw = 0.5 * p.g**2 * (od + st + bd)
        if self.coherent is not None:
            xi = coherent_xi_batch(X, self.grid, *self.coherent, p)
            logw = logw + 0.25 * xi.real
            phase = phase + 0.25 * xi.imag
        return logw, phase


@dataclass
class GammaEvaluator:
    params: ModelParams
    grid: TimeGrid
    kernels: LagKernels | None
    w_diag: float | None

    def __call__(self, X):
        g2 = self.params.g**2
        if g2 == 0:
            z = np.zeros(X.shape[0])
            return z, z.copy()
        S, C = direct_action_batch(X, self.grid.dt, self.kernels, self.w_diag,
                                   split=self.grid.zero_index)
        return 0.5 * g2 * S - g2 * C, 0.5 * g2 * S


# -- estimators ----------------------------------------------------------------------

@dataclass(frozen=True)
class RunOptions:
    """Numerical knobs shared by all estimators."""

    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    radii: TableSpec = field(default_factory=TableSpec)
    use_tables: bool = True
    workers: int = 1
    batch_size: int = mc.DEFAULT_BATCH
    log_weight_cap: float = mc.DEFAULT_LOG_WEIGHT_CAP


DEFAULT_OPTIONS = RunOptions()


def _nelson_evaluator(params, mode, grid, tau, opts, coherent=None):
    _check_nelson(params)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not grid.two_sided or grid.T != params.T:
        raise ValueError("grid must be two-sided with the same T as params")
    tau = 2.0 * grid.T if tau is None else tau
    L = window_lags(tau, grid)
    kernels, w_diag = None, None
    if params.g != 0:
        if mode == "direct" and params.d == 3 and params.eps == 0:
            raise EstimatorError("the direct action diverges at eps = 0 in d = 3")
        kernels = make_kernels(params, grid, opts.quad, opts.radii, opts.use_tables)
        if mode == "direct":
            kernels.prepare("W")
            if diagonal_included(params):
                w_diag = float(pair_potential_W(0.0, 0.0, params, opts.quad))
        else:
            kernels.prepare("drho", "rho", *(["W"] if L < grid.n_steps else []))
    return NelsonEvaluator(params, grid, mode, L, kernels, w_diag, coherent), tau


def _fp(*parts):
    return fingerprint(*parts)


def weights_and_phases(params: ModelParams, mode: str, grid: TimeGrid, n_paths: int,
                       master_seed: int, tau: float | None = None,
                       options: RunOptions = DEFAULT_OPTIONS, coherent=None):
    ev, tau = _nelson_evaluator(params, mode, grid, tau, options, coherent)
    logw, phase = mc.run_paths(ev, grid, params.d, n_paths, master_seed, options.workers,
                               options.batch_size)
    mc.check_log_weights(logw, options.log_weight_cap)
    tables = ev.kernels.error_bounds() if ev.kernels is not None else {}
    return logw, phase, tau, tables


def vacuum_expectation(params: ModelParams, mode: str, grid: TimeGrid, n_paths: int,
                       master_seed: int, tau: float | None = None,
                       options: RunOptions = DEFAULT_OPTIONS) -> mc.MCEstimate:
    """MC mean of e^{i P.(B_T - B_-T)} e^{(g^2/2) S} over n_paths paths."""
    logw, phase, tau, tables = weights_and_phases(params, mode, grid, n_paths, master_seed,
                                                  tau, options)
    vals = mc.weighted_phase(logw, phase)
    fp = _fp(params, grid, options.quad, options.radii, mode, tau, options.use_tables)
    return mc.estimate(vals, master_seed, fp, mode=mode, tau=tau, weight_cap_hits=0,
                       table_error_bounds=tables)


def gamma_overlap(params: ModelParams, grid: TimeGrid, n_paths: int, master_seed: int,
                  options: RunOptions = DEFAULT_OPTIONS) -> mc.MCEstimate:
    """Ratio estimate of the ground-state overlap gamma(T) on common paths."""
    _check_nelson(params)
    if np.any(params.P_array != 0):
        raise ValueError("gamma(T) is defined at P = 0")
    if params.d == 3 and params.eps == 0:
        raise EstimatorError("gamma(T) needs eps > 0 in d = 3")
    kernels, w_diag = None, None
    if params.g != 0:
        kernels = make_kernels(params, grid, options.quad, options.radii,
                               options.use_tables).prepare("W")
        if diagonal_included(params):
            w_diag = float(pair_potential_W(0.0, 0.0, params, options.quad))
    ev = GammaEvaluator(params, grid, kernels, w_diag)
    log_num, log_den = mc.run_paths(ev, grid, params.d, n_paths, master_seed, options.workers,
                                    options.batch_size)
    mc.check_log_weights(np.maximum(log_num, log_den), options.log_weight_cap)
    fp = _fp(params, grid, options.quad, options.radii, "gamma", options.use_tables)
    tables = kernels.error_bounds() if kernels is not None else {}
    return mc.ratio_estimate(np.exp(log_num), np.exp(log_den), master_seed, fp,
                             lower_bound=gamma_lower_bound(params), weight_cap_hits=0,
                             table_error_bounds=tables)


def energy_from_mean(mean_re: float, T: float, horizon: float = 2.0) -> float:
    """-ln(Re mean) / (horizon * T); horizon is 2 on [-T, T] and 1 on [0, T]."""
    if not mean_re > 0:
        raise EstimatorError(
            "Re of the vacuum estimate is not positive; raise n_paths or lower T"
        )
    return -math.log(mean_re) / (horizon * T)


def energy(params: ModelParams, mode: str, grid: TimeGrid, n_paths: int, master_seed: int,
           tau: float | None = None, options: RunOptions = DEFAULT_OPTIONS) -> float:
    est = vacuum_expectation(params, mode, grid, n_paths, master_seed, tau, options)
    return energy_from_mean(est.mean_re, params.T)


@dataclass(frozen=True)
class DiamagneticRow:
    P: tuple[float, ...]
    mean: complex
    modulus: float
    energy: float
    ok: bool


@dataclass(frozen=True)
class DiamagneticReport:
    v0: float
    e0: float
    rows: tuple[DiamagneticRow, ...]

    @property
    def ok(self) -> bool:
        return all(row.ok for row in self.rows)


def diamagnetic_from_weights(logw: np.ndarray, dB: np.ndarray, P_list: Sequence,
                             T: float, horizon: float) -> DiamagneticReport:
    """|sum_j e^{iP.dB_j} w_j| <= sum_j w_j for each P, with shared weights w_j."""
    w = np.exp(logw)
    n = w.size
    v0 = math.fsum(w) / n
    e0 = energy_from_mean(v0, T, horizon)
    rows = []
    for P in P_list:
        phase = dB @ np.asarray(P, dtype=float)
        re = math.fsum(w * np.cos(phase)) / n
        im = math.fsum(w * np.sin(phase)) / n
        mod = math.hypot(re, im)
        e = energy_from_mean(re, T, horizon) if re > 0 else math.inf
        rows.append(DiamagneticRow(tuple(float(p) for p in P), complex(re, im), mod, e,
                                   bool(mod <= v0 and e >= e0)))
    return DiamagneticReport(v0, e0, tuple(rows))


def diamagnetic_check(params_list: Sequence[ModelParams], grid: TimeGrid, n_paths: int,
                      master_seed: int, mode: str = "renormalized", tau: float | None = None,
                      options: RunOptions = DEFAULT_OPTIONS) -> DiamagneticReport:
    """Pathwise diamagnetic inequality over a list of parameters differing only in P."""
    base = params_list[0].replace(P=None)
    for p in params_list:
        if p.replace(P=None) != base:
            raise ValueError("parameter sets may differ only in P")
    logw, _, _, _ = weights_and_phases(base, mode, grid, n_paths, master_seed, tau, options)
    dB = _endpoint_increments(grid, base.d, n_paths, master_seed, options)
    return diamagnetic_from_weights(logw, dB, [p.P for p in params_list], base.T, 2.0)


@dataclass
class _Endpoints:
    def __call__(self, X):
        return (X[:, -1] - X[:, 0],)


def _endpoint_increments(grid, d, n_paths, master_seed, options):
    (dB,) = mc.run_paths(_Endpoints(), grid, d, n_paths, master_seed, options.workers,
                         options.batch_size)
    return dB.reshape(n_paths, d)


def coherent_expectation(params: ModelParams, alpha: complex, beta: complex,
                         rho1: RadialProfile, rho2: RadialProfile, grid: TimeGrid,
                         n_paths: int, master_seed: int, mode: str = "renormalized",
                         tau: float | None = None,
                         options: RunOptions = DEFAULT_OPTIONS) -> mc.MCEstimate:
    """MC estimate of E[e^{iP.dB} e^{(g^2/2) S + xi/4}] for exponential vectors."""
    if params.d != 3:
        raise ValueError("coherent states are implemented for d = 3")
    _check_profile(rho1)
    _check_profile(rho2)
    coherent = (alpha, beta, rho1, rho2)
    logw, phase, tau, tables = weights_and_phases(params, mode, grid, n_paths, master_seed,
                                                  tau, options, coherent)
    vals = mc.weighted_phase(logw, phase)
    fp = _fp(params, grid, options.quad, options.radii, mode, tau, "coherent",
             repr(alpha), repr(beta))
    return mc.estimate(vals, master_seed, fp, mode=mode, tau=tau, weight_cap_hits=0,
                       table_error_bounds=tables)
