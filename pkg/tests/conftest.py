import numpy as np
import pytest

from neutronk import models
from neutronk.phase import PhasePoint


def within(est, target, n_sigma=3.0, floor=0.0):
    """True when ``target`` lies within ``n_sigma`` standard errors of ``est``."""
    return abs(est.value - target) <= n_sigma * est.std_error + floor


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def hetero():
    return models.heterogeneous_box()


@pytest.fixture(scope="session")
def hetero_start():
    return PhasePoint((1.5, 1.0, 1.0), (1.2, 0.0, 0.0))


@pytest.fixture(scope="session")
def unit_box():
    return models.homogeneous_box()


VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` records one acceptance line and fails the test if not ``ok``."""
    lines = request.config.stash[VERDICTS]

    def report(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.line(lines[n])
