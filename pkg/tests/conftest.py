import numpy as np
import pytest

from tiltpump import ModelParams


@pytest.fixture(scope="session")
def fig_params():
    """Reference lattice: J=-1, delta0=0.8, Delta0=2, U=30, omega=0.005, omega_F/omega=10/3, L_t=26."""
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
