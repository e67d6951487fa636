import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cavitymimo.model import ChannelParams, DeterministicProfile  # noqa: E402

R_STAR_N = 6
R_STAR_GAMMA = 0.5
R_STAR_RHOS = (2.0, 8.0)


def r_star_profile():
    return DeterministicProfile(np.linspace(0.5, 1.5, R_STAR_N), np.full(R_STAR_N, 0.2))


def r_star_params(rho0):
    return ChannelParams(R_STAR_N, 1.0 / (2.0 * math.pi), R_STAR_GAMMA, rho0)


def random_regime(rng, sizes=(1, 2, 6), scalar_loss=True):
    """Random (profile, params) in a well-conditioned region."""
    n = int(rng.choice(sizes))
    h0 = rng.uniform(0.2, 2.0, n)
    loss = np.full(n, rng.uniform(0.1, 1.0)) if scalar_loss else rng.uniform(0.1, 1.0, n)
    gamma = rng.uniform(0.1, 1.5)
    rho = rng.uniform(0.5, 20.0)
    return DeterministicProfile(h0, loss), ChannelParams.from_rho(n, gamma, rho)


@pytest.fixture
def r_star():
    return r_star_profile(), r_star_params


ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
