import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spwell.functional import Constants
from spwell.grid import BOUNDED_WELL, PotentialSpec, build_grid

settings.register_profile("spwell", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("spwell")


@pytest.fixture(scope="session")
def small():
    """Radial grid (L=12, n=400) with the bounded catalog well and its constants at p = 8/3."""
    grid = build_grid("radial", 12.0, 400)
    spec = PotentialSpec(BOUNDED_WELL)
    V = spec.sample(grid)
    omega = spec.omega(grid)
    return grid, V, omega, Constants.build(grid, omega, 8.0 / 3.0, V)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        v = VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:>2} {v['name']}: {v['status'].upper()} ({v['seconds']:.1f} s)")
