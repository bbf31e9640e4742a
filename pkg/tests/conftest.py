import numpy as np
import pytest

from entrosense import corrmodel, scenario


def kernel_matrix(m, seed, placement_std=scenario.DEFAULT_PLACEMENT_STD, sigma=50.0, theta=3.08):
    fld = scenario.generate_field(m, placement_std, sigma, seed=seed)
    C = corrmodel.build_correlation(fld, corrmodel.CorrelationModel(theta), scenario.distance_matrix(fld))
    return fld, C


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
