import numpy as np
import pytest

from floorloc import maps
from floorloc.database import build_ray_database

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def two_room():
    return maps.two_room()


@pytest.fixture(scope="session")
def two_room_db(two_room):
    return build_ray_database(two_room, 120, 15.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
