"""Independent reference values for the test suite.

``cartesian_fourier`` integrates f(|k|) e^{-ik.x} over {|k| >= lam} in
Cartesian coordinates, never using the radial (sinc / J0) reduction.  The
region outside the ball is cut into boxes and slabs whose curved faces are
straightened by sine substitutions, so plain tensor Gauss-Legendre rules are
accurate on every piece.
"""
from __future__ import annotations

import math

import mpmath as mp
import numpy as np

GL_ORDER = 8


def _gl(a, b, panel=1.0, order=GL_ORDER):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x0, w0 = np.polynomial.legendre.leggauss(order)
    n = max(1, int(math.ceil((b - a) / panel)))
    edges = np.linspace(a, b, n + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * x0 + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w0
    return x.ravel(), np.broadcast_to(w, x.shape).ravel()


def _sym(a, b, panel):
    """Nodes on [-b, -a] u [a, b]."""
    x, w = _gl(a, b, panel)
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def _accumulate(f, x, kx, ky, kz, w):
    k = np.sqrt(kx * kx + ky * ky + (0.0 if kz is None else kz * kz))
    phase = kx * x[0] + ky * x[1] + (0.0 if kz is None else kz * x[2])
    return float(np.sum(w * f(k, phase)))


def cartesian_fourier(f, x, lam: float, K: float, panel: float = 1.0,
                      angle_panel: float = 0.75) -> float:
    """Integral of f(|k|, k.x) over lam <= |k|, |k_i| <= K in d = len(x) dimensions.

    ``f(k, phase)`` gets the modulus and the phase k.x, so Fourier integrands
    pass ``g(k) * cos(phase)`` (the sine part is odd and integrates to zero).
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    half = math.pi / 2
    th, wth = _gl(-half, half, panel=angle_panel)  # kx = lam sin(theta) inside the ball's shadow
    full, wfull = _gl(-K, K, panel)
    out, wout = _sym(lam, K, panel)
    total = 0.0
    if d == 2:
        # |kx| >= lam: every ky
        KX, KY = np.meshgrid(out, full, indexing="ij")
        W = np.outer(wout, wfull)
        total += _accumulate(f, x, KX, KY, None, W)
        # |kx| < lam: |ky| >= c = lam cos(theta)
        for t, wt in zip(th, wth):
            kx, c = lam * math.sin(t), lam * math.cos(t)
            ky, wy = _sym(c, K, panel)
            total += wt * c * _accumulate(f, x, np.full_like(ky, kx), ky, None, wy)
        return total
    if d != 3:
        raise ValueError("d must be 2 or 3")
    # |kx| >= lam: the whole (ky, kz) square
    KY, KZ = np.meshgrid(full, full, indexing="ij")
    W = np.outer(wfull, wfull)
    for kx, wx in zip(out, wout):
        total += wx * _accumulate(f, x, np.full_like(KY, kx), KY, KZ, W)
    ph, wph = _gl(-half, half, panel=angle_panel)
    for t, wt in zip(th, wth):
        kx, c = lam * math.sin(t), lam * math.cos(t)
        jac_x = wt * c
        # |ky| >= c: every kz
        ky, wy = _sym(c, K, panel)
        KY, KZ = np.meshgrid(ky, full, indexing="ij")
        total += jac_x * _accumulate(f, x, np.full_like(KY, kx), KY, KZ, np.outer(wy, wfull))
        # |ky| < c, ky = c sin(phi): |kz| >= s = c cos(phi)
        for p, wp in zip(ph, wph):
            ky1, s = c * math.sin(p), c * math.cos(p)
            kz, wz = _sym(s, K, panel)
            total += jac_x * wp * s * _accumulate(
                f, x, np.full_like(kz, kx), np.full_like(kz, ky1), kz, wz)
    return total


def cutoff_box(eps: float, t: float, tol: float = 1e-8) -> float:
    """Half-width K beyond which e^{-eps k^2 - k t} < tol."""
    return math.sqrt(-math.log(tol) / eps)


def _direction(d, seed):
    v = np.random.default_rng(seed).normal(size=d)
    return v / np.linalg.norm(v)


def nelson_cartesian(kernel: str, r: float, t: float, d: int, eps: float, lam: float,
                     seed: int = 0, panel: float = 1.0) -> float:
    """W, rho or d_r rho from their defining d-dimensional Fourier integrals.

    W   = int e^{-eps k^2} e^{-|t| k} / (2k) e^{-ik.x} dk
    rho = int e^{-eps k^2} e^{-|t| k} beta(k) / (2k) e^{-ik.x} dk
    d_r rho is the derivative along x/|x|, i.e. the integrand gains -i k.x/|x|.
    """
    u = _direction(d, seed)
    x = r * u
    K = cutoff_box(eps, abs(t))

    def amp(k):
        a = np.exp(-eps * k * k - abs(t) * k) / (2 * k)
        if kernel in ("rho", "drho"):
            a = a / (k + 0.5 * k * k)
        return a

    if kernel == "drho":
        # -i (k.u) e^{-ik.x} has even part -(k.u) sin(k.x); k.u = phase / r
        f = lambda k, phase: -amp(k) * (phase / r) * np.sin(phase)
    elif kernel in ("W", "rho"):
        f = lambda k, phase: amp(k) * np.cos(phase)
    else:
        raise ValueError(kernel)
    return cartesian_fourier(f, x, lam, K, panel)


def polaron_cartesian(r: float, t: float, eps: float, lam: float, seed: int = 0,
                      panel: float = 1.0) -> float:
    """int_{|k|>=lam} e^{-eps k^2} e^{-ik.x} e^{-|t|} / (2 k^2) dk in d = 3."""
    x = r * _direction(3, seed)
    K = cutoff_box(eps, 0.0)
    f = lambda k, phase: np.exp(-eps * k * k) / (2 * k * k) * np.cos(phase)
    return math.exp(-abs(t)) * cartesian_fourier(f, x, lam, K, panel)


# -- high-precision one-dimensional references ----------------------------------------

mp.mp.dps = 30


def mp_rho_diag(eps: float, lam: float, d: int = 3) -> float:
    """rho_eps(0, 0) by mpmath quadrature of its radial integrand."""
    eps, lam = mp.mpf(eps), mp.mpf(lam)
    if d == 3:
        f = lambda k: 2 * mp.pi * mp.exp(-eps * k * k) / (1 + k / 2)
    else:
        f = lambda k: mp.pi * mp.exp(-eps * k * k) / (k + k * k / 2)
    return float(mp.quad(f, [lam, lam + 1, lam + 10, mp.inf]))


def mp_sine_integral(x: float) -> float:
    return float(mp.si(x))


def mp_bessel_j0(x: float) -> float:
    return float(mp.besselj(0, x))


def mp_inverse_cube_d3(eps: float, lam: float) -> float:
    """4 pi int_lam^inf e^{-eps k^2} / k dk."""
    eps, lam = mp.mpf(eps), mp.mpf(lam)
    return float(4 * mp.pi * mp.quad(lambda k: mp.exp(-eps * k * k) / k, [lam, lam + 5, mp.inf]))


def mp_constant_path_integral(T: float, eps: float, lam: float, kernel: str = "nelson") -> float:
    """int int_{[a, a+L]^2} W(0, t - s) ds dt for a constant path.

    Nelson: horizon L = 2T, W(0, u) = 2 pi int_lam^inf k e^{-eps k^2 - k|u|} dk.
    Polaron: L = T, W(0, u) = e^{-|u|} 2 pi int_lam^inf e^{-eps k^2} dk.
    The double integral over u uses the weight 2(L - u) on [0, L].
    """
    eps, lam = mp.mpf(eps), mp.mpf(lam)
    if kernel == "nelson":
        L = 2 * mp.mpf(T)
        # int_0^L 2(L-u) e^{-ku} du in closed form, then the k integral
        inner = lambda k: 2 * (L / k - (1 - mp.exp(-k * L)) / k**2)
        return float(2 * mp.pi * mp.quad(lambda k: k * mp.exp(-eps * k * k) * inner(k),
                                         [lam, lam + 5, mp.inf]))
    L = mp.mpf(T)
    w0 = 2 * mp.pi * mp.quad(lambda k: mp.exp(-eps * k * k), [lam, mp.inf])
    return float(w0 * 2 * (L - 1 + mp.exp(-L)))


def mp_radial_eps0(kernel: str, r: float, t: float, lam: float = 1.0) -> float:
    """W_0, rho_0 or d_r rho_0 in d = 3 by mpmath oscillatory quadrature in k."""
    r, t = mp.mpf(r), mp.mpf(t)

    def amp(k):
        a = 4 * mp.pi * k**2 * mp.exp(-t * k) / (2 * k)
        return a if kernel == "W" else a / (k + k * k / 2)

    if kernel == "drho":
        f = lambda k: amp(k) * (k * r * mp.cos(k * r) - mp.sin(k * r)) / (k * r * r)
    else:
        f = lambda k: amp(k) * mp.sin(k * r) / (k * r)
    return float(mp.quadosc(f, [lam, mp.inf], omega=r))
