import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spherefield.spectrum import condition_a_spectrum, normalize

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def spec25():
    return normalize(condition_a_spectrum(2.5, l_max=64))


@pytest.fixture(scope="session")
def spec3():
    return normalize(condition_a_spectrum(3.0, l_max=64))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def haversine(p, q):
    """Independent great-circle distance from (colatitude, longitude) pairs."""
    lat1, lat2 = 0.5 * math.pi - p[0], 0.5 * math.pi - q[0]
    dlat, dlon = lat2 - lat1, q[1] - p[1]
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * math.asin(min(1.0, math.sqrt(h)))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
