import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ksliouville import potential

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    potential.set_threads(1)
    yield
    potential.set_threads(None)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_mixture(grid, beta, rng, centers=None, spread=1.5, k=3, var_range=(0.4, 1.5)):
    """Random nonnegative Gaussian mixtures with exact masses ``beta``."""
    from ksliouville.field import DensityField
    beta = np.atleast_1d(beta)
    vals = []
    for i in range(beta.size):
        c0 = np.zeros(2) if centers is None else np.asarray(centers[i], float)
        acc = np.zeros((grid.N, grid.N))
        for _ in range(k):
            c = c0 + rng.uniform(-spread, spread, size=2)
            var = rng.uniform(*var_range)
            acc += rng.uniform(0.2, 1.0) * np.exp(-grid.dist2(c) / (2 * var))
        vals.append(acc)
    return DensityField(grid, vals).normalized(beta)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
