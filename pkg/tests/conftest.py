import numpy as np
import pytest

from dipres.system import new_system


@pytest.fixture
def sys2():
    """2LS with d_eps = 0.01, d_mu = 0.5, mu = 0.1 (A0 = 0.02)."""
    return new_system([0.0, 0.01], [[0.0, 0.1], [0.1, 0.5]])


@pytest.fixture
def sys3():
    """Chain 0-1-2 without direct 0-2 coupling."""
    return new_system([0.0, 0.01, 0.025], [[0.0, 0.1, 0.0], [0.1, 0.5, 0.1], [0.0, 0.1, 0.8]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
