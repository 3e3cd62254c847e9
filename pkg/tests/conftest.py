import numpy as np
import pytest

from schwarzschild_vlasov.geometry import BlackHoleParams


@pytest.fixture(scope="session")
def params():
    return BlackHoleParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA = []  # one line per acceptance criterion, filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
