"""Pair kernels, the diagonal counterterm and the overlap lower bounds.

All kernels are Fourier integrals over ``|k| >= lam`` that depend on ``x``
only through ``r = |x|``.  The angular integral is done analytically, leaving
one-dimensional radial integrals:

* d = 3:  int e^{-ik.x} F(|k|) dk = 4 pi int_0^inf k^2 F(k) sinc(k r) dk
* d = 2:  int e^{-ik.x} F(|k|) dk = 2 pi int_0^inf k F(k) J0(k r) dk

At ``eps = 0`` in three dimensions the radial integrals have closed forms in
terms of the complex exponential integral, which are used directly (they are
exact and much cheaper than an undamped oscillatory quadrature).  Everything
else goes through :func:`nelsonmc.quadrature.radial_integral`.

Functions accept scalars or broadcastable arrays for ``r`` and ``t`` and
return a float for scalar input.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .params import (
    KernelDivergenceError,
    KernelDomainError,
    ModelParams,
    QuadratureConfig,
)
from .quadrature import DEFAULT_QUAD, composite_nodes, radial_integral

TWO_PI = 2.0 * math.pi
# below this r/t ratio the eps=0 closed forms lose digits to cancellation
_SMALL_R_RATIO = 1e-3


def propagator_beta(k):
    """beta(k) = 1 / (omega(k) + k^2/2) with omega(k) = k."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise KernelDomainError("propagator_beta needs k > 0")
    out = 1.0 / (k + 0.5 * k * k)
    return float(out) if out.ndim == 0 else out


def _beta(k):
    return 1.0 / (k + 0.5 * k * k)


def _k_beta(k):
    return 1.0 / (1.0 + 0.5 * k)


def _k2_beta(k):
    return k / (1.0 + 0.5 * k)


def _ones(k):
    return np.ones_like(k)


def _identity(k):
    return np.asarray(k, dtype=float)


def _inv_k(k):
    return 1.0 / k


def _prepare(r, t):
    scalar = np.ndim(r) == 0 and np.ndim(t) == 0
    r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    r = r.astype(float, copy=True)
    t = np.abs(t.astype(float, copy=True))
    if np.any(r < 0):
        raise KernelDomainError("radius must be >= 0")
    return scalar, r, t


def _finish(scalar, out):
    return float(out) if scalar else out


def _require(params: ModelParams, model: str):
    if params.model != model:
        raise KernelDomainError(f"kernel needs model={model!r}, got {params.model!r}")


# --------------------------------------------------------------------------
# eps = 0 closed forms (three dimensions)
# --------------------------------------------------------------------------

def w_nelson3_eps0(r, t, lam):
    """W_0(r, t) = 2 pi e^{-lam t} (t sin(lam r)/r + cos(lam r)) / (t^2 + r^2)."""
    r = np.asarray(r, dtype=float)
    t = np.abs(np.asarray(t, dtype=float))
    sinc = lam * np.sinc(lam * r / np.pi)
    return TWO_PI * np.exp(-lam * t) * (t * sinc + np.cos(lam * r)) / (t * t + r * r)


def _e1_shifted(z, lam):
    # e^{2z} E1((lam + 2) z) = int_lam^inf e^{-k z} / (k + 2) dk
    return np.exp(2.0 * z) * special.exp1((lam + 2.0) * z)


def rho_nelson3_eps0(r, t, lam):
    """rho_0 for d = 3 via exponential integrals (r > 0)."""
    z = np.abs(t) - 1j * np.asarray(r, dtype=float)
    val = special.exp1(lam * z) - _e1_shifted(z, lam)
    return TWO_PI * val.imag / r


def drho_nelson3_eps0(r, t, lam):
    """d/dr rho_0 for d = 3 via exponential integrals (r > 0)."""
    r = np.asarray(r, dtype=float)
    z = np.abs(t) - 1j * r
    rho = rho_nelson3_eps0(r, t, lam)
    return -rho / r + 2.0 * TWO_PI * _e1_shifted(z, lam).real / r


def rho_nelson3_eps0_origin(t, lam):
    """rho_0(0, t) = 4 pi e^{2t} E1((lam + 2) t) for t > 0."""
    t = np.asarray(t, dtype=float)
    return 2.0 * TWO_PI * np.exp(2.0 * t) * special.exp1((lam + 2.0) * t)


def _w_nelson2_eps0(r, t, lam, quad):
    # pi int_lam^inf e^{-kt} J0(kr) dk = pi (1/sqrt(r^2+t^2) - int_0^lam e^{-kt} J0(kr) dk)
    n_pan = int(max(4, math.ceil(lam * float(np.max(r, initial=0.0)) / 2.0) + 4))
    k, wk = composite_nodes(np.linspace(0.0, lam, n_pan + 1), quad.panel_order)
    head = np.exp(-np.outer(t.ravel(), k)) * special.j0(np.outer(r.ravel(), k)) @ wk
    return math.pi * (1.0 / np.hypot(r, t) - head.reshape(r.shape))


# --------------------------------------------------------------------------
# public kernels
# --------------------------------------------------------------------------

def pair_potential_W(r, t, params: ModelParams, quad: QuadratureConfig | None = None):
    """Nelson pair potential W_eps(x, t) for |x| = r."""
    _require(params, "nelson")
    quad = quad or DEFAULT_QUAD
    scalar, r, t = _prepare(r, t)
    eps, lam = params.eps, params.lam
    if eps == 0 and np.any((r == 0) & (t == 0)):
        raise KernelDivergenceError("W_0(0, 0) is infinite")
    if params.d == 3:
        if eps == 0:
            out = w_nelson3_eps0(r, t, lam)
        else:
            out = TWO_PI * radial_integral(
                _identity, r, t, eps=eps, lower=lam, osc="sinc",
                tail_coef=1.0, tail_power=1.0, quad=quad,
            )
    else:
        if eps == 0:
            out = _w_nelson2_eps0(r, t, lam, quad)
        else:
            out = math.pi * radial_integral(
                _ones, r, t, eps=eps, lower=lam, osc="j0",
                tail_coef=1.0, tail_power=0.0, quad=quad,
            )
    return _finish(scalar, out)


def rho_kernel(r, t, params: ModelParams, quad: QuadratureConfig | None = None):
    """rho_eps(x, t): the W integrand with an extra factor beta(k)."""
    _require(params, "nelson")
    quad = quad or DEFAULT_QUAD
    scalar, r, t = _prepare(r, t)
    eps, lam = params.eps, params.lam
    out = np.empty(r.shape)
    if params.d == 3:
        if eps == 0:
            if np.any((r == 0) & (t == 0)):
                raise KernelDivergenceError("rho_0(0, 0) diverges in d = 3")
            closed = r >= _SMALL_R_RATIO * t
            out[closed] = rho_nelson3_eps0(r[closed], t[closed], lam)
            near = ~closed
        else:
            near = np.ones(r.shape, bool)
        if near.any():
            out[near] = TWO_PI * radial_integral(
                _k_beta, r[near], t[near], eps=eps, lower=lam, osc="sinc",
                tail_coef=2.0, tail_power=-1.0, quad=quad,
            )
    else:
        origin = (r == 0) & (eps == 0)
        if origin.any():
            to = t[origin]
            with np.errstate(divide="ignore", invalid="ignore"):
                val = special.exp1(lam * to) - np.exp(2 * to) * special.exp1((lam + 2) * to)
            out[origin] = math.pi * np.where(to == 0, math.log((lam + 2) / lam), val)
        rest = ~origin
        if rest.any():
            out[rest] = math.pi * radial_integral(
                _beta, r[rest], t[rest], eps=eps, lower=lam, osc="j0",
                tail_coef=2.0, tail_power=-2.0, quad=quad,
            )
    return _finish(scalar, out)


def rho_radial_derivative(r, t, params: ModelParams, quad: QuadratureConfig | None = None):
    """d/dr rho_eps(r, t); the gradient is (x / r) times this value."""
    _require(params, "nelson")
    quad = quad or DEFAULT_QUAD
    scalar, r, t = _prepare(r, t)
    if np.any(r <= 0):
        raise KernelDomainError("rho_radial_derivative needs r > 0")
    eps, lam = params.eps, params.lam
    out = np.empty(r.shape)
    if params.d == 3:
        closed = (r >= _SMALL_R_RATIO * t) if eps == 0 else np.zeros(r.shape, bool)
        if closed.any():
            out[closed] = drho_nelson3_eps0(r[closed], t[closed], lam)
        near = ~closed
        if near.any():
            out[near] = -TWO_PI * radial_integral(
                _k2_beta, r[near], t[near], eps=eps, lower=lam, osc="sph_j1",
                tail_coef=2.0, tail_power=0.0, quad=quad,
            )
    else:
        out = -math.pi * radial_integral(
            _k_beta, r, t, eps=eps, lower=lam, osc="j1",
            tail_coef=2.0, tail_power=-1.0, quad=quad,
        )
    return _finish(scalar, out)


def rho_diag(params: ModelParams, quad: QuadratureConfig | None = None) -> float:
    """rho_eps(0, 0); the energy counterterm is -g^2 times this value."""
    _require(params, "nelson")
    if params.eps == 0 and params.d == 3:
        raise KernelDivergenceError("rho_0(0, 0) diverges in d = 3")
    return float(rho_kernel(0.0, 0.0, params, quad))


def counterterm(params: ModelParams, quad: QuadratureConfig | None = None) -> float:
    """E_eps = -g^2 rho_eps(0, 0)."""
    return -params.g**2 * rho_diag(params, quad)


def polaron_W(r, t, params: ModelParams, quad: QuadratureConfig | None = None):
    """Polaron pair potential W^pol_eps(x, t) = e^{-|t|} w(|x|) (d = 3).

    With the substitution u = k r the radial form is
    (2 pi / r) e^{-|t|} int_{lam r}^inf exp(-eps u^2 / r^2) sin(u) / u du.
    """
    _require(params, "polaron")
    quad = quad or DEFAULT_QUAD
    scalar, r, t = _prepare(r, t)
    return _finish(scalar, _time_factor(t) * _polaron_radial(r, params, quad))


def _time_factor(t):
    # math.exp per distinct gap, so e^{-t} w(r) factorizes bit for bit
    uniq, inv = np.unique(t, return_inverse=True)
    return np.array([math.exp(-u) for u in uniq])[inv].reshape(t.shape)


def _polaron_radial(r, params: ModelParams, quad):
    eps, lam = params.eps, params.lam
    if eps == 0:
        if np.any(r == 0):
            raise KernelDomainError("W^pol_0 is singular at r = 0")
        if lam == 0:
            return math.pi**2 / r
        return TWO_PI / r * (0.5 * math.pi - special.sici(lam * r)[0])
    if lam == 0:
        out = np.empty(r.shape)
        zero = r == 0
        out[zero] = math.pi**1.5 / math.sqrt(eps)
        rz = r[~zero]
        out[~zero] = math.pi**2 / rz * special.erf(rz / (2.0 * math.sqrt(eps)))
        return out
    return TWO_PI * radial_integral(
        _ones, r, np.zeros_like(r), eps=eps, lower=lam, osc="sinc",
        tail_coef=1.0, tail_power=0.0, quad=quad,
    )


def kernel_function(kernel_id: str):
    """Map a kernel id ('W', 'rho', 'drho', 'polaron') to its evaluator."""
    table = {
        "W": pair_potential_W,
        "rho": rho_kernel,
        "drho": rho_radial_derivative,
        "polaron": polaron_W,
    }
    try:
        return table[kernel_id]
    except KeyError:
        raise ValueError(f"unknown kernel id {kernel_id!r}") from None


# --------------------------------------------------------------------------
# lower bounds for the ground-state overlap
# --------------------------------------------------------------------------

def inverse_cube_integral(params: ModelParams) -> float:
    """int_{|k|>=lam} exp(-eps k^2) / omega(k)^3 dk over R^d."""
    eps, lam = params.eps, params.lam
    if params.d == 3:
        if eps == 0:
            return math.inf
        return TWO_PI * float(special.exp1(eps * lam * lam))
    if eps == 0:
        return TWO_PI / lam
    return TWO_PI * (
        math.exp(-eps * lam * lam) / lam
        - math.sqrt(math.pi * eps) * math.erfc(lam * math.sqrt(eps))
    )


def gamma_lower_bound(params: ModelParams) -> float:
    """exp(-g^2 int 1_{|k|>=lam} e^{-eps k^2} / omega^3 dk)."""
    return math.exp(-params.g**2 * inverse_cube_integral(params))
