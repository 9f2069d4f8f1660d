"""Monte Carlo driver: batching, worker pool and deterministic reduction.

Paths are processed in fixed batches aligned to path indices, so the set of
per-path numbers does not depend on the worker count.  The final reduction
runs over the per-path values in index order with ``math.fsum``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .params import EstimatorError, WeightOverflowError
from .paths import TimeGrid, sample_batch

DEFAULT_BATCH = 256
DEFAULT_LOG_WEIGHT_CAP = 700.0


@dataclass(frozen=True)
class MCEstimate:
    mean: complex | float
    std_error: float
    n_samples: int
    master_seed: int
    params_fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("an estimate needs at least two samples")

    @property
    def mean_re(self) -> float:
        return float(np.real(self.mean))

    @property
    def mean_im(self) -> float:
        return float(np.imag(self.mean))


def fsum_mean(values: np.ndarray) -> complex | float:
    if np.iscomplexobj(values):
        n = values.size
        return complex(math.fsum(values.real) / n, math.fsum(values.imag) / n)
    return math.fsum(values) / values.size


def std_error(values: np.ndarray) -> float:
    """Sample standard deviation over sqrt(n); complex values use |z - mean|^2."""
    n = values.size
    if n < 2:
        raise ValueError("need at least two samples")
    dev = np.abs(values - fsum_mean(values))
    scale = float(dev.max())
    if scale == 0 or not math.isfinite(scale):
        return scale
    # scaled so that weights near the log-weight cap do not overflow when squared
    var = math.fsum((dev / scale) ** 2) / (n - 1)
    return scale * math.sqrt(var / n)


def estimate(values: np.ndarray, master_seed: int, fp: str = "", **extra) -> MCEstimate:
    return MCEstimate(fsum_mean(values), std_error(values), int(values.size), master_seed,
                      fp, dict(extra))


def ratio_estimate(num: np.ndarray, den: np.ndarray, master_seed: int, fp: str = "",
                   **extra) -> MCEstimate:
    """mean(num) / mean(den) on common samples with a delta-method standard error."""
    n = num.size
    scale = float(max(np.abs(num).max(), np.abs(den).max()))
    if scale > 0 and math.isfinite(scale):
        num, den = num / scale, den / scale  # the ratio and its error are scale free
    a, b = fsum_mean(num), fsum_mean(den)
    if not b > 0:
        raise EstimatorError("ratio denominator is not positive")
    R = a / b
    da, db = num - a, den - b
    var_a = math.fsum(da * da) / (n - 1)
    var_b = math.fsum(db * db) / (n - 1)
    cov = math.fsum(da * db) / (n - 1)
    var_r = max(var_a - 2 * R * cov + R * R * var_b, 0.0) / (b * b)
    return MCEstimate(R, math.sqrt(var_r / n), n, master_seed, fp, dict(extra))


def check_log_weights(logw: np.ndarray, cap: float) -> None:
    hits = int(np.count_nonzero(~(logw <= cap)))
    if hits:
        raise WeightOverflowError(
            f"{hits} path log-weights exceed the cap {cap:g}; lower g or T", hits
        )


def weighted_phase(logw: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """exp(logw) * exp(i phase), with an exactly real result where phase == 0."""
    w = np.exp(logw)
    return w * np.cos(phase) + 1j * (w * np.sin(phase))


# -- batch scheduling --------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(evaluator, grid, d, master_seed):
    _WORKER_STATE.update(evaluator=evaluator, grid=grid, d=d, seed=master_seed)


def _run_batch(task):
    start, count = task
    s = _WORKER_STATE
    X = sample_batch(s["grid"], s["d"], s["seed"], start, count)
    return s["evaluator"](X)


def run_paths(evaluator, grid: TimeGrid, d: int, n_paths: int, master_seed: int,
              workers: int = 1, batch_size: int = DEFAULT_BATCH) -> tuple[np.ndarray, ...]:
    """Apply ``evaluator`` to paths 0..n_paths-1 and concatenate its outputs.

    ``evaluator(X)`` receives a batch of positions (batch, n_nodes, d) and
    returns a tuple of per-path arrays.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    tasks = [(s, min(batch_size, n_paths - s)) for s in range(0, n_paths, batch_size)]
    if workers <= 1:
        _init_worker(evaluator, grid, d, master_seed)
        try:
            parts = [_run_batch(t) for t in tasks]
        finally:
            _WORKER_STATE.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker,
            initargs=(evaluator, grid, d, master_seed),
        ) as pool:
            parts = list(pool.map(_run_batch, tasks))
    return tuple(np.concatenate(cols) for cols in zip(*parts))
