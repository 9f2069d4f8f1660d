"""Model parameters, quadrature settings and the package exception hierarchy."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

Model = Literal["nelson", "polaron"]


class NelsonMCError(Exception):
    """Base class for all errors raised by this package."""


class KernelDomainError(NelsonMCError, ValueError):
    """A kernel was evaluated outside its domain (e.g. k <= 0 or r <= 0)."""


class KernelDivergenceError(NelsonMCError, ArithmeticError):
    """The requested kernel value is infinite (e.g. the d=3 diagonal at eps=0)."""


class QuadratureError(NelsonMCError, ArithmeticError):
    """The semi-infinite quadrature could not meet its error budget."""


class WeightOverflowError(NelsonMCError, OverflowError):
    """A per-path log weight exceeded the configured cap."""

    def __init__(self, message: str, hits: int = 0):
        super().__init__(message)
        self.hits = hits


class EstimatorError(NelsonMCError):
    """An estimator could not produce a meaningful value (e.g. Re mean <= 0)."""


class ProfileError(NelsonMCError, ValueError):
    """A coherent-state momentum profile is not square integrable against 1/omega."""


class TableValidationError(NelsonMCError):
    """A kernel table failed its interpolation-accuracy validation."""


@dataclass(frozen=True)
class ModelParams:
    """Physical and regularization parameters.

    ``lam`` is the infrared cutoff, ``eps`` the ultraviolet regularization
    (Gaussian damping ``exp(-eps k^2)`` inside the pair kernels) and ``P`` the
    total momentum.
    """

    d: int = 3
    g: float = 0.0
    lam: float = 1.0
    eps: float = 0.5
    P: tuple[float, ...] | None = None
    T: float = 1.0
    model: Model = "nelson"

    def __post_init__(self):
        if self.P is None:
            P = (0.0,) * self.d
        else:
            P = tuple(float(p) for p in np.atleast_1d(self.P))
        object.__setattr__(self, "P", P)
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if len(self.P) != self.d:
            raise ValueError(f"P must have {self.d} components, got {len(self.P)}")
        if self.model not in ("nelson", "polaron"):
            raise ValueError(f"unknown model {self.model!r}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError("eps must be >= 0")
        if not math.isfinite(self.g):
            raise ValueError("g must be finite")
        if self.model == "nelson" and not self.lam > 0:
            raise ValueError("the Nelson model needs an infrared cutoff lam > 0")
        if self.model == "polaron":
            if self.lam < 0:
                raise ValueError("lam must be >= 0")
            if self.d != 3:
                raise ValueError("the polaron kernel is only defined for d = 3")

    @property
    def P_array(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float)

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def as_dict(self) -> dict:
        data = asdict(self)
        data["P"] = list(self.P)
        return data


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings of the semi-infinite radial quadrature.

    The truncation point is chosen so that an analytic majorant of the
    discarded tail stays below ``abs_tol``. ``panel_order`` is the number of
    Gauss-Legendre nodes per panel; panels never span more than half a period
    of the oscillatory factor when ``oscillation_splitting`` is on.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    panel_order: int = 16
    max_panels: int = 200_000
    oscillation_splitting: bool = True
    max_envelope_decay: float = 8.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("abs_tol and rel_tol must be positive")
        if self.panel_order < 2:
            raise ValueError("panel_order must be >= 2")


@dataclass(frozen=True)
class TableSpec:
    """Radius grid used by the lag-aligned kernel tables of the estimators.

    Radii below ``r_switch`` are log spaced (``n_log`` nodes from ``r_lo``),
    radii above are uniform with spacing ``dr`` up to ``r_hi``.
    """

    r_lo: float = 1e-7
    r_switch: float = 0.5
    r_hi: float | None = None
    n_log: int = 360
    dr: float = 0.05
    excursion_multiple: float = 8.0

    def resolved_r_hi(self, span: float) -> float:
        if self.r_hi is not None:
            return float(self.r_hi)
        return max(self.excursion_multiple * math.sqrt(span), 2 * self.r_switch)

    def r_grid(self, span: float) -> np.ndarray:
        r_hi = self.resolved_r_hi(span)
        lo = np.geomspace(self.r_lo, self.r_switch, self.n_log)
        n_uni = max(int(math.ceil((r_hi - self.r_switch) / self.dr)), 1)
        hi = np.linspace(self.r_switch, r_hi, n_uni + 1)[1:]
        return np.concatenate([lo, hi])


def fingerprint(*parts) -> str:
    """Stable short hash of JSON-serialisable configuration pieces."""
    blob = json.dumps([_plain(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, float):
        return repr(obj)
    return obj
