import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonmc import BrownianPath, TimeGrid, sample_path
from nelsonmc.paths import endpoint_increment, path_generator, sample_batch

N_STAT = 100_000


def within_3se_of_variance(x, target):
    """Sample variance of x against target, with se = target * sqrt(2/(n-1))."""
    n = x.size
    return abs(np.var(x, ddof=1) - target) <= 3 * target * math.sqrt(2 / (n - 1))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 8.0), st.integers(1, 300), st.booleans())
def test_grid_nodes(T, n_half, two_sided):
    g = TimeGrid(T, n_half, two_sided)
    t = g.nodes
    assert t.size == g.n_nodes
    assert t[0] == (-T if two_sided else 0.0) and t[-1] == T and t[g.zero_index] == 0.0
    assert np.all(np.diff(t) > 0)
    assert g.dt == T / n_half


def test_grid_from_dt():
    assert TimeGrid.from_dt(1.0, 1 / 64).N_half == 64
    assert TimeGrid.from_dt(0.5, 1 / 256, two_sided=False).n_steps == 128
    with pytest.raises(ValueError):
        TimeGrid.from_dt(1.0, 0.3)


@pytest.mark.parametrize("two_sided", [True, False])
def test_pinned_at_zero(two_sided):
    g = TimeGrid(1.0, 12, two_sided)
    X = sample_batch(g, 3, 5, 0, 50)
    assert np.all(X[:, g.zero_index] == 0.0)


def test_deterministic():
    g = TimeGrid(1.0, 16)
    a, b = sample_path(g, 3, 42, 7), sample_path(g, 3, 42, 7)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, sample_path(g, 3, 43, 7).positions)


def test_path_independent_of_batch_layout():
    g = TimeGrid(1.0, 8)
    whole = sample_batch(g, 2, 9, 0, 40)
    parts = np.concatenate([sample_batch(g, 2, 9, s, c) for s, c in ((0, 13), (13, 1), (14, 26))])
    assert np.array_equal(whole, parts)
    assert np.array_equal(sample_path(g, 2, 9, 21).positions, whole[21])


@pytest.mark.parametrize("n_half", [1, 3, 8, 12])
def test_refinement_shares_coarse_nodes(n_half):
    g = TimeGrid(1.0, n_half)
    coarse = sample_batch(g, 3, 3, 0, 20)
    fine = sample_batch(g.refined(), 3, 3, 0, 20)
    finer = sample_batch(g.refined().refined(), 3, 3, 0, 20)
    assert np.array_equal(fine[:, ::2], coarse)
    assert np.array_equal(finer[:, ::4], coarse)


def test_endpoint_variances():
    g = TimeGrid(1.0, 4)
    X = sample_batch(g, 3, 2024, 0, N_STAT)
    BT = X[:, -1]
    dB = X[:, -1] - X[:, 0]
    for c in range(3):
        assert within_3se_of_variance(BT[:, c], 1.0)
        assert within_3se_of_variance(dB[:, c], 2.0)
        assert abs(dB[:, c].mean()) <= 3 * math.sqrt(2.0 / N_STAT)


def test_step_variance_and_half_independence():
    g = TimeGrid(0.5, 6)
    X = sample_batch(g, 2, 11, 0, 20_000)
    inc = np.diff(X, axis=1)
    assert within_3se_of_variance(inc[:, :, 0].ravel(), g.dt)
    back = X[:, 0, 0] - X[:, g.zero_index, 0]
    fwd = X[:, -1, 0]
    corr = np.corrcoef(back, fwd)[0, 1]
    assert abs(corr) < 4 / math.sqrt(X.shape[0])
    # disjoint steps in the same half are uncorrelated too
    c = np.corrcoef(inc[:, 7, 1], inc[:, 9, 1])[0, 1]
    assert abs(c) < 4 / math.sqrt(X.shape[0])


def test_endpoint_increment():
    g = TimeGrid(1.0, 4)
    zero = BrownianPath.from_increments(g, np.zeros((g.n_steps, 3)))
    assert np.array_equal(endpoint_increment(zero), np.zeros(3))
    p = sample_path(g, 3, 1, 0)
    assert np.array_equal(endpoint_increment(p), p.positions[-1] - p.positions[0])


def test_path_is_read_only():
    p = sample_path(TimeGrid(1.0, 4), 3, 0)
    with pytest.raises(ValueError):
        p.positions[1, 0] = 1.0


def test_path_validation():
    g = TimeGrid(1.0, 2)
    with pytest.raises(ValueError):
        BrownianPath(g, np.ones((g.n_nodes, 3)))
    with pytest.raises(ValueError):
        BrownianPath(g, np.zeros((3, 3)))


def test_path_csv(tmp_path):
    g = TimeGrid(1.0, 2)
    p = sample_path(g, 2, 4)
    p.to_csv(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["t", "x1", "x2"]
    assert len(rows) == g.n_nodes + 1
    assert float(rows[1][0]) == -1.0
    assert np.array_equal(np.array(rows[1:], dtype=float)[:, 1:], p.positions)


def test_reversal():
    p = sample_path(TimeGrid(1.0, 4), 3, 0)
    assert np.array_equal(p.reversed().positions, p.positions[::-1])


def test_seed_range():
    with pytest.raises(ValueError):
        path_generator(2**64, 0)
