import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smallcosts.models import BlackScholesModel, FrictionParams, StochVolModel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def bs():
    return BlackScholesModel(0.1, 0.2)


@pytest.fixture
def sv():
    return StochVolModel(0.2, -0.05, 0.4, 0.1)


@pytest.fixture
def fp():
    return FrictionParams(1e-3, 1.0, -1.5, 2.5, 1.0)


def mean_se(x):
    x = np.asarray(x, float)
    return x.mean(), x.std(ddof=1) / np.sqrt(x.size)


LONG_EPS = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


@pytest.fixture(scope="session")
def long_sweep():
    """Black-Scholes over ten years, five spreads, 10^5 paths (shared by the sweep checks)."""
    from smallcosts.engine import run_ensemble

    fp = FrictionParams(1e-3, 1.0, -0.25, 1.25, 10.0)
    return run_ensemble(BlackScholesModel(0.2, 0.4), fp, LONG_EPS, n=25_000, n_paths=100_000, seed=20240601)
