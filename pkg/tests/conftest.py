import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gftk import random_graph

settings.register_profile(
    "gftk",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("gftk")

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_random_graph(seed, n=None, p=0.3):
    r = np.random.default_rng(seed)
    n = int(r.integers(5, 30)) if n is None else n
    return random_graph(n, p, r)
