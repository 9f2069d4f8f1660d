"""Discretized Brownian paths with counter-based seeding.

Every path is generated from its own Philox stream keyed by
``(master_seed, path_index)``, so path ``i`` is the same no matter how many
paths are drawn, in which order, or by which worker.

Paths are built by Brownian-bridge refinement.  With ``N_half = q * 2**m``
(``q`` odd) the first ``q`` increments of each half are drawn directly and
each further level fills in the midpoints of the previous one.  Normals are
consumed level by level, so a path on a grid with twice as many steps starts
with the same draws and reproduces the coarse nodes bit for bit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [-T, T] (two-sided) or [0, T] (one-sided)."""

    T: float
    N_half: int
    two_sided: bool = True

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        if int(self.N_half) != self.N_half or self.N_half < 1:
            raise ValueError("N_half must be a positive integer")

    @classmethod
    def from_dt(cls, T: float, dt: float, two_sided: bool = True) -> "TimeGrid":
        n = T / dt
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ValueError(f"T={T} is not a multiple of dt={dt}")
        return cls(T, int(round(n)), two_sided)

    @property
    def dt(self) -> float:
        return self.T / self.N_half

    @property
    def n_steps(self) -> int:
        return 2 * self.N_half if self.two_sided else self.N_half

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def zero_index(self) -> int:
        return self.N_half if self.two_sided else 0

    @property
    def span(self) -> float:
        return 2.0 * self.T if self.two_sided else self.T

    @property
    def nodes(self) -> np.ndarray:
        i = np.arange(self.n_nodes)
        t = (i - self.zero_index) * self.dt
        t[0] = -self.T if self.two_sided else 0.0
        t[-1] = self.T
        t[self.zero_index] = 0.0
        return t

    def refined(self) -> "TimeGrid":
        return TimeGrid(self.T, 2 * self.N_half, self.two_sided)


def _odd_split(n: int) -> tuple[int, int]:
    m = 0
    while n % 2 == 0:
        n //= 2
        m += 1
    return n, m


def path_generator(master_seed: int, index: int) -> np.random.Generator:
    """Philox stream for one path; the 128-bit key is (master_seed, index)."""
    if not 0 <= master_seed <= _MASK64 or not 0 <= index <= _MASK64:
        raise ValueError("master_seed and path index must fit in 64 bits")
    return np.random.Generator(np.random.Philox(key=(master_seed << 64) | index))


def _half_path(z: np.ndarray, T: float, q: int, m: int) -> np.ndarray:
    """Positions at steps 0..q*2**m of one half from level-ordered normals.

    ``z`` has shape (batch, q * 2**m, d) with the level-0 draws first.
    """
    batch, n, d = z.shape
    x = np.zeros((batch, n + 1, d))
    stride = 1 << m
    x[:, stride::stride] = np.cumsum(math.sqrt(T / q) * z[:, :q], axis=1)
    used = q
    for level in range(1, m + 1):
        cnt = q << (level - 1)
        h = T / (q * 2 ** (level - 1))
        half = stride // 2
        left = x[:, 0:n:stride]
        right = x[:, stride::stride]
        x[:, half::stride] = 0.5 * (left + right) + math.sqrt(h / 4.0) * z[:, used:used + cnt]
        used += cnt
        stride = half
    return x


def sample_batch(grid: TimeGrid, d: int, master_seed: int, start: int, count: int,
                 ) -> np.ndarray:
    """Positions of paths ``start .. start+count-1``, shape (count, n_nodes, d)."""
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    q, m = _odd_split(grid.N_half)
    n = grid.N_half
    sides = 2 if grid.two_sided else 1
    z = np.empty((count, sides, n, d))
    for b in range(count):
        gen = path_generator(master_seed, start + b)
        # level-major: for each level draw backward block then forward block
        raw = gen.standard_normal(sides * n * d)
        pos = 0
        for level in range(m + 1):
            cnt = q if level == 0 else q << (level - 1)
            off = 0 if level == 0 else q << (level - 1)
            for s in range(sides):
                z[b, s, off:off + cnt] = raw[pos:pos + cnt * d].reshape(cnt, d)
                pos += cnt * d
    if grid.two_sided:
        back = _half_path(z[:, 0], grid.T, q, m)
        fwd = _half_path(z[:, 1], grid.T, q, m)
        return np.concatenate([back[:, :0:-1], fwd], axis=1)
    return _half_path(z[:, 0], grid.T, q, m)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    positions: np.ndarray
    seed: tuple[int, int] | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[0] != self.grid.n_nodes:
            raise ValueError("positions must have shape (n_nodes, d)")
        if np.any(pos[self.grid.zero_index] != 0.0):
            raise ValueError("path must vanish at t = 0")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def from_increments(cls, grid: TimeGrid, increments) -> "BrownianPath":
        """Path whose forward steps are ``increments`` (shape (n_steps, d)), pinned at 0."""
        inc = np.asarray(increments, dtype=float)
        pos = np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
        pos = pos - pos[grid.zero_index]
        return cls(grid, pos)

    @classmethod
    def constant(cls, grid: TimeGrid, d: int) -> "BrownianPath":
        return cls(grid, np.zeros((grid.n_nodes, d)))

    def reversed(self) -> "BrownianPath":
        """Time reversal t -> -t (two-sided grids only)."""
        if not self.grid.two_sided:
            raise ValueError("time reversal needs a two-sided grid")
        return BrownianPath(self.grid, self.positions[::-1], self.seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.d)])
            for t, x in zip(self.grid.nodes, self.positions):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x])


def sample_path(grid: TimeGrid, d: int, master_seed: int, index: int = 0) -> BrownianPath:
    """Path number ``index`` of the stream family ``master_seed``."""
    pos = sample_batch(grid, d, master_seed, index, 1)[0]
    return BrownianPath(grid, pos, (master_seed, index))


def endpoint_increment(path: BrownianPath) -> np.ndarray:
    """B_T - B_{-T} (or B_T - B_0 on a one-sided grid)."""
    return path.positions[-1] - path.positions[0]
