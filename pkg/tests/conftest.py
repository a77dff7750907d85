import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from startile.substitution import chair_system, penrose_system, squares_system

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def chair():
    return chair_system()


@pytest.fixture(scope="session")
def penrose():
    return penrose_system()


@pytest.fixture(scope="session")
def squares():
    return squares_system()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


ACCEPTANCE = []  # (number, name, passed, detail) filled in by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line("[%s] %d. %s: %s" % ("PASS" if ok else "FAIL", num, name, detail))
