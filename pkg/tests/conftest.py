import numpy as np
import pytest

from cases import phantom_case


@pytest.fixture(scope="session")
def y_phantom():
    return phantom_case(generations=2)


@pytest.fixture(scope="session")
def g4_phantom():
    return phantom_case(generations=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
