import numpy as np
import pytest

from fcdspeed.grid import EncodingParams, GridConfig

ACCEPTANCE_LINES = []


@pytest.fixture
def berlin():
    return GridConfig(lat_min=52.359, lat_max=52.854, lon_min=13.189, lon_max=13.625)


@pytest.fixture
def small_grid():
    return GridConfig(lat_min=48.0, lat_max=48.02, lon_min=11.0, lon_max=11.02)


@pytest.fixture
def enc():
    return EncodingParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
