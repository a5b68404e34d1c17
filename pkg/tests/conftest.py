import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from frictionest import dynamics  # noqa: E402
from frictionest.friction import FrictionParams  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def one_dof():
    return dynamics.ManipulatorModel.one_dof()


@pytest.fixture
def two_link():
    return dynamics.ManipulatorModel.two_link(masses=(1.2, 0.7), lengths=(0.5, 0.4),
                                              com=(0.2, 0.15), inertias=(0.03, 0.01))


@pytest.fixture
def truth():
    return FrictionParams(0.8, 0.5, 0.4, 0.1)


def random_states(model, k, seed=0):
    rng = np.random.default_rng(seed)
    n = model.n_joints
    q = rng.uniform(model.q_min, model.q_max, (k, n))
    qd = rng.uniform(model.qd_min, model.qd_max, (k, n))
    qdd = rng.uniform(-5.0, 5.0, (k, n))
    return q, qd, qdd
