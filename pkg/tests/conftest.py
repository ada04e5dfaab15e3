import numpy as np
import pytest
from hypothesis import settings

from netsched.presets import preset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def exp1():
    return preset("experiment1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_schur(rng, d, radius=0.9):
    """Random d×d matrix rescaled to spectral radius ``radius``."""
    X = rng.standard_normal((d, d))
    return X * (radius / max(abs(np.linalg.eigvals(X))))
