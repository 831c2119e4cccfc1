import numpy as np
import pytest

from tirepde import VehicleParams, build_matrices
from tirepde.freq import default_grid, injection_gain_response
from tirepde.observer import fit_injection_filter


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def mats(params):
    return build_matrices(params)


@pytest.fixture(scope="session")
def hhat_response(mats):
    return injection_gain_response(default_grid(), 500.0, 1.0, mats)


@pytest.fixture(scope="session")
def injection_filter(hhat_response):
    # order 72 is the lowest order in the default sweep that meets 1e-3
    return fit_injection_filter(hhat_response, orders=[72], dt=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
