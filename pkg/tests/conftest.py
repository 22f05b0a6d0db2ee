import numpy as np
import pytest

from steinpair import couplings as C
from steinpair import models as M


@pytest.fixture(scope="session")
def normal_zoo():
    """(label, standardized coupling, metadata) for every normal-side model."""
    out = []
    for name, params in M.NORMAL_ZOO:
        c, meta = M.build_model(name, params)
        out.append((f"{name}{params}", C.standardize(c), meta))
    return out


@pytest.fixture(scope="session")
def poisson_zoo():
    out = []
    for name, params in M.POISSON_ZOO:
        c, meta = M.build_model(name, params)
        out.append((f"{name}{params}", c, meta))
    return out


def three_cycle(p_forward=0.8):
    P = np.zeros((3, 3))
    for k in range(3):
        P[k, (k + 1) % 3] = p_forward
        P[k, (k - 1) % 3] = 1.0 - p_forward
    return P


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
