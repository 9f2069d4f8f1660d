import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nelsonmc import ModelParams, TimeGrid  # noqa: E402
from nelsonmc.estimators import weights_and_phases  # noqa: E402

SWEEP_EPS = (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.0)
SWEEP_PATHS = 4096
SWEEP_DT = 1 / 64


@pytest.fixture(scope="session")
def renormalized_eps_sweep():
    """Per-path renormalized weights on common paths, d=3, g=0.5, lam=1, T=1.

    Returns {eps: weights}; shared by the estimator and acceptance tests.
    """
    grid = TimeGrid.from_dt(1.0, SWEEP_DT)
    out = {}
    for eps in SWEEP_EPS:
        p = ModelParams(d=3, g=0.5, lam=1.0, eps=eps, T=1.0)
        logw, _, _, _ = weights_and_phases(p, "renormalized", grid, SWEEP_PATHS, 0)
        out[eps] = np.exp(logw)
    return out


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append-only list of 'criterion N: PASS|FAIL ...' lines shown after the run."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
