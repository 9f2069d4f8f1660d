"""Semi-infinite radial quadrature with oscillatory kernels.

Every pair kernel of the package reduces to

    I(r, t) = integral_{lower}^{inf} m(k) exp(-eps k^2 - k t) osc(k r) dk

with a smooth algebraic factor ``m`` and ``osc`` one of ``sinc``, ``j0``,
``j1`` or ``sph_j1`` (or no oscillation).  Points are grouped by their
truncation point and evaluated on a shared composite Gauss-Legendre grid whose
panels are no wider than half an oscillation period of the largest radius in
the group, so a matrix product does the work for a whole group at once.

When there is no exponential damping at all (``eps == 0`` and ``t == 0``) the
integral is only conditionally convergent; it is then summed panel by panel
between consecutive sign changes of ``osc`` and the alternating partial sums
are accelerated by repeated averaging.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .params import QuadratureConfig, QuadratureError

DEFAULT_QUAD = QuadratureConfig()

# phase offset (in units of pi) of the asymptotic zeros of each oscillatory factor
_ZERO_OFFSET = {"sinc": 0.0, "j0": -0.25, "j1": 0.25, "sph_j1": 0.5}
_CHUNK = 2_000_000


@lru_cache(maxsize=16)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def oscillator(name: str | None) -> Callable[[np.ndarray], np.ndarray]:
    if name is None:
        return np.ones_like
    if name == "sinc":
        return lambda x: np.sinc(x / np.pi)
    if name == "j0":
        return special.j0
    if name == "j1":
        return special.j1
    if name == "sph_j1":
        return _sph_j1
    raise ValueError(f"unknown oscillatory factor {name!r}")


def _sph_j1(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out[small] = xs / 3.0 * (1.0 - xs * xs / 10.0)
    xl = x[~small]
    out[~small] = (np.sin(xl) / xl - np.cos(xl)) / xl
    return out


def tail_majorant(K, eps: float, t, coef: float, power: float):
    """Upper bound of int_K^inf coef k^power exp(-eps k^2 - k t) dk.

    Uses k^p <= K^p exp(max(p, 0) (k - K) / K) and concavity of the exponent.
    Returns inf where the exponent is not decreasing at K.
    """
    K = np.asarray(K, dtype=float)
    t = np.asarray(t, dtype=float)
    slope = 2.0 * eps * K + t - max(power, 0.0) / K
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        val = coef * K**power * np.exp(-eps * K * K - K * t) / slope
    return np.where(slope > 0, val, np.inf)


def truncation_point(eps: float, t, coef: float, power: float, tol: float, start: float):
    """Smallest (up to 1%) K >= start whose tail majorant is below ``tol``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if eps == 0 and np.any(t <= 0):
        raise QuadratureError("no exponential damping: truncation point undefined")
    hi = np.full(t.shape, max(start, 1.0))
    for _ in range(200):
        bad = tail_majorant(hi, eps, t, coef, power) > tol
        if not bad.any():
            break
        hi = np.where(bad, hi * 2.0, hi)
    else:
        raise QuadratureError("could not bound the quadrature tail")
    lo = np.maximum(hi / 2.0, start)
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        ok = tail_majorant(mid, eps, t, coef, power) <= tol
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return np.maximum(hi, start)


def _breakpoints(lower: float, K: float, h: float, max_panels: int) -> np.ndarray:
    if K <= lower:
        return np.array([lower, lower])
    n_uni = int(math.ceil((K - lower) / h))
    if n_uni > max_panels:
        raise QuadratureError(
            f"quadrature needs {n_uni} panels (> max_panels={max_panels})"
        )
    pts = [np.linspace(lower, K, n_uni + 1)]
    if lower > 0:
        geo = lower * 2.0 ** np.arange(1, 64)
        pts.append(geo[geo < K])
    else:
        scale = min(h, K) * 2.0 ** -np.arange(1, 12)
        pts.append(scale)
    b = np.unique(np.concatenate(pts))
    keep = np.concatenate([[True], np.diff(b) > 1e-12 * max(K, 1.0)])
    return b[keep]


def composite_nodes(breaks: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(order)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    k = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wk = (half[:, None] * w[None, :]).ravel()
    return k, wk


def _shared_grid_integral(m, osc, r, t, eps, lower, K, quad):
    r_max = float(np.max(r)) if r.size else 0.0
    t_max = float(np.max(t)) if t.size else 0.0
    h = K - lower
    if osc is not None and r_max > 0 and quad.oscillation_splitting:
        h = min(h, math.pi / r_max)
    decay = quad.max_envelope_decay
    if eps > 0:
        h = min(h, decay / (2.0 * eps * K))
    if t_max > 0:
        h = min(h, decay / t_max)
    h = min(h, max((K - lower) / 4.0, 1e-300))
    breaks = _breakpoints(lower, K, h, quad.max_panels)
    k, wk = composite_nodes(breaks, quad.panel_order)
    base = m(k) * wk
    gauss = np.exp(-eps * k * k)
    f = oscillator(osc)
    out = np.empty(r.shape)
    step = max(1, _CHUNK // max(k.size, 1))
    for s in range(0, r.size, step):
        rs, ts = r[s:s + step], t[s:s + step]
        mat = np.exp(-np.outer(ts, k)) * gauss
        if osc is not None:
            mat *= f(np.outer(rs, k))
        out[s:s + step] = mat @ base
    return out


def _alternating_integral(m, osc, r, lower, quad):
    """Integral of m(k) osc(k r) on [lower, inf) with no damping (r > 0)."""
    if osc is None or r <= 0:
        raise QuadratureError("undamped integral without oscillation diverges")
    off = _ZERO_OFFSET[osc]
    period = math.pi / r
    # head: resolve the envelope near `lower` together with the first half periods
    n0 = max(int(math.ceil(lower / period - off)) + 20, 20)
    head_end = (n0 + off) * period
    head = _shared_grid_integral(
        m, osc, np.array([r]), np.array([0.0]), 0.0, lower, head_end, quad
    )[0]
    x, w = gauss_legendre(quad.panel_order)
    f = oscillator(osc)
    partial = [head]
    total = head
    estimate_prev = None
    block = 64
    n_done = 0
    while n_done < quad.max_panels:
        idx = np.arange(n_done, n_done + block)
        a = (n0 + off + idx) * period
        b = a + period
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        k = mid[:, None] + half[:, None] * x[None, :]
        panels = (m(k) * f(k * r) * w[None, :]).sum(axis=1) * half
        sums = total + np.cumsum(panels)
        total = sums[-1]
        partial.extend(sums.tolist())
        n_done += block
        estimate = _repeated_average(np.array(partial[-24:]))
        if estimate_prev is not None:
            err = abs(estimate - estimate_prev)
            if err <= max(quad.abs_tol, quad.rel_tol * abs(estimate)):
                return estimate
        estimate_prev = estimate
    raise QuadratureError("alternating tail did not converge within max_panels")


def _repeated_average(s: np.ndarray) -> float:
    while s.size > 1:
        s = 0.5 * (s[1:] + s[:-1])
    return float(s[0])


def radial_integral(
    m: Callable[[np.ndarray], np.ndarray],
    r,
    t,
    *,
    eps: float,
    lower: float,
    osc: str | None,
    tail_coef: float,
    tail_power: float,
    quad: QuadratureConfig | None = None,
    k_max: float | None = None,
) -> np.ndarray:
    """Evaluate int_lower^inf m(k) exp(-eps k^2 - k t) osc(k r) dk for arrays r, t.

    ``tail_coef * k**tail_power`` must bound ``|m(k)|`` for large k; it is used
    to pick the truncation point.  ``k_max`` overrides the automatic choice.
    """
    quad = quad or DEFAULT_QUAD
    r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    shape = r.shape
    r = r.ravel().copy()
    t = np.abs(t.ravel())
    out = np.empty(r.shape)
    undamped = (eps == 0) & (t == 0) if k_max is None else np.zeros(r.shape, bool)
    for i in np.flatnonzero(undamped):
        out[i] = _alternating_integral(m, osc, r[i], lower, quad)
    rest = np.flatnonzero(~undamped)
    if rest.size:
        if k_max is not None:
            K = np.full(rest.size, float(k_max))
        else:
            K = truncation_point(
                eps, t[rest], tail_coef, tail_power, quad.abs_tol, max(lower, 1.0)
            )
        bucket = np.ceil(np.log2(K) * 2.0)
        for bval in np.unique(bucket):
            sel = rest[bucket == bval]
            Kb = float(np.max(K[bucket == bval]))
            out[sel] = _shared_grid_integral(m, osc, r[sel], t[sel], eps, lower, Kb, quad)
    return out.reshape(shape)
