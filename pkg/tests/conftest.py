import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lqrlab import RngStream
from lqrlab.harness.config import bundled_config_path, load_config

settings.register_profile(
    "lqrlab", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lqrlab")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ex1():
    return load_config(bundled_config_path("example1.json")).system


@pytest.fixture(scope="session")
def ex2():
    return load_config(bundled_config_path("example2.json")).system


@pytest.fixture
def rng():
    return RngStream(12345)


DEADBEAT = np.eye(2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
