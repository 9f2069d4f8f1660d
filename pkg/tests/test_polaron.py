import math

import mpmath as mp
import numpy as np
import pytest

import oracles
from nelsonmc import (
    ModelParams,
    PolaronRun,
    TimeGrid,
    kato_moment_stress,
    polaron_action,
    polaron_vacuum,
    polaron_W,
    sample_path,
)
from nelsonmc.paths import BrownianPath
from nelsonmc.polaron import (
    default_r_min,
    polaron_diamagnetic_check,
    polaron_mode,
    _polaron_weights,
)
from nelsonmc.estimators import RunOptions
from nelsonmc.mc import std_error


def polaron(**kw):
    base = dict(d=3, g=0.2, lam=1.0, eps=0.5, T=1.0, model="polaron")
    base.update(kw)
    return ModelParams(**base)


def forward(T, dt):
    return TimeGrid.from_dt(T, dt, two_sided=False)


def expected_collisions(N, dt, r):
    """Mean number of node pairs i < j < N with |B_i - B_j| < r (chi-3 distribution)."""
    total = mp.mpf(0)
    for k in range(1, N):
        total += (N - k) * mp.gammainc(1.5, 0, mp.mpf(r) ** 2 / (2 * k * dt), regularized=True)
    return float(total)


def test_modes():
    assert polaron_mode(polaron()) == "regularized"
    assert polaron_mode(polaron(eps=0.0)) == "eps0"
    assert polaron_mode(polaron(eps=0.0, lam=0.0)) == "ir_limit"
    assert default_r_min(4.0) == 2e-6


def test_run_validation():
    with pytest.raises(ValueError):
        PolaronRun(polaron(), TimeGrid(1.0, 4), 10, 0)
    with pytest.raises(ValueError):
        PolaronRun(polaron(T=2.0), forward(1.0, 0.25), 10, 0)
    with pytest.raises(ValueError):
        PolaronRun(polaron().replace(model="nelson"), forward(1.0, 0.25), 10, 0)
    run = PolaronRun(polaron(), forward(1.0, 0.25), 10, 0)
    with pytest.raises(ValueError):
        polaron_vacuum(run, mode="ir_limit")


def test_constant_path_double_integral():
    p = polaron()
    errs = []
    want = oracles.mp_constant_path_integral(1.0, 0.5, 1.0, "polaron")
    for dt in (1 / 64, 1 / 256):
        S = polaron_action(BrownianPath.constant(forward(1.0, dt), 3), p)
        errs.append(abs(S / want - 1))
    assert errs[1] < 1e-5
    assert errs[1] < errs[0]


@pytest.mark.parametrize("lam,eps", [(1.0, 0.5), (1.0, 0.0), (0.0, 0.0)])
def test_factorized_matches_pairwise_kernel(lam, eps):
    p = polaron(lam=lam, eps=eps)
    path = sample_path(forward(1.0, 1 / 16), 3, 4)
    a = polaron_action(path, p, factorized=True)
    b = polaron_action(path, p, factorized=False)
    assert a == pytest.approx(b, rel=1e-13)


def test_ir_limit_action_brute_sum():
    p = polaron(lam=0.0, eps=0.0)
    g = forward(0.5, 1 / 8)
    path = sample_path(g, 3, 2)
    X = path.positions
    want = 0.0
    for i in range(g.n_steps):
        for j in range(g.n_steps):
            if i != j:
                want += math.exp(-abs(i - j) * g.dt) * math.pi**2 / np.linalg.norm(X[i] - X[j])
    assert polaron_action(path, p) == pytest.approx(want * g.dt**2, rel=1e-12)


def test_free_polaron_characteristic_function():
    run = PolaronRun(polaron(g=0.0, P=(1.0, 0.0, 0.0)), forward(1.0, 1 / 8), 20_000, 1)
    est = polaron_vacuum(run)
    assert abs(est.mean_re - math.exp(-0.5)) <= 3 * est.std_error
    assert est.extra["collision_events"] == 0


def test_weights_positive_and_finite():
    run = PolaronRun(polaron(eps=0.0, lam=0.0, T=0.5), forward(0.5, 1 / 32), 256, 0)
    logw, phase, hits, _ = _polaron_weights(run, RunOptions())
    assert np.all(np.isfinite(logw)) and np.all(logw > 0)
    assert np.all(phase == 0.0)
    assert hits == 0


def test_collision_counts_match_exact_expectation():
    p = polaron(lam=0.0, eps=0.0, T=0.5)
    r_min = 0.05
    for dt in (1 / 32, 1 / 64, 1 / 128):
        run = PolaronRun(p, forward(0.5, dt), 4096, 0, r_min=r_min)
        got = polaron_vacuum(run).extra["collision_events"] / 4096
        assert got == pytest.approx(expected_collisions(run.grid.n_steps, dt, r_min), rel=0.1)


def test_default_floor_is_practically_never_hit():
    p = polaron(lam=0.0, eps=0.0, T=0.5)
    for dt in (1 / 32, 1 / 64, 1 / 128):
        run = PolaronRun(p, forward(0.5, dt), 1024, 3)
        assert polaron_vacuum(run).extra["collision_events"] == 0
        assert expected_collisions(run.grid.n_steps, dt, default_r_min(0.5)) < 1e-12


def test_diamagnetic_polaron():
    run = PolaronRun(polaron(eps=0.0, lam=0.0, T=0.5), forward(0.5, 1 / 32), 512, 2)
    Ps = [(0.0, 0.0, 0.0), (0.3, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 2.0, 0.0),
          (1.0, 1.0, 1.0)]
    rep = polaron_diamagnetic_check(run, Ps)
    assert rep.ok
    assert rep.rows[0].mean.real == rep.v0
    base = polaron_vacuum(PolaronRun(run.params, run.grid, 512, 2))
    assert base.mean_re == rep.v0


def test_kato_free_is_exactly_one():
    run = PolaronRun(polaron(g=0.0, eps=0.0, lam=0.0, T=0.5), forward(0.5, 1 / 8), 64, 0)
    rep = kato_moment_stress(run, dts=(1 / 8, 1 / 16))
    assert [lv.estimate.mean for lv in rep.levels] == [1.0, 1.0]
    assert rep.relative_drift == 0.0 and rep.stabilized and not rep.growing


def test_kato_requires_ir_limit():
    with pytest.raises(ValueError):
        kato_moment_stress(PolaronRun(polaron(), forward(1.0, 0.25), 8, 0))


def test_kato_small_run_stabilizes():
    run = PolaronRun(polaron(eps=0.0, lam=0.0, T=0.5), forward(0.5, 1 / 32), 1024, 0)
    rep = kato_moment_stress(run, dts=(1 / 32, 1 / 64, 1 / 128))
    means = [lv.estimate.mean_re for lv in rep.levels]
    assert all(m > 1 for m in means)
    assert rep.stabilized and not rep.growing
    assert [lv.collision_events for lv in rep.levels] == [0, 0, 0]


def test_lambda_sweep_pathwise_cauchy():
    grid = forward(0.5, 1 / 32)
    w = {}
    for lam in (1.0, 0.5, 0.25, 0.125, 0.0625, 0.0):
        run = PolaronRun(polaron(lam=lam, eps=0.0, T=0.5, g=1.0), grid, 512, 5)
        w[lam] = np.exp(_polaron_weights(run, RunOptions())[0])
    halvings = [1.0, 0.5, 0.25, 0.125, 0.0625]
    gaps = [np.mean(np.abs(w[a] - w[b])) for a, b in zip(halvings, halvings[1:])]
    assert all(x > y for x, y in zip(gaps, gaps[1:]))
    to_limit = [np.mean(np.abs(w[a] - w[0.0])) for a in halvings]
    assert all(x > y for x, y in zip(to_limit, to_limit[1:]))
    assert to_limit[-1] < 0.1 * to_limit[0]
