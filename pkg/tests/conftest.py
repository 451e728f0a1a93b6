import numpy as np
import pytest

from higgsflow import LatticeSurface


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def s8():
    return LatticeSurface(8)


@pytest.fixture(scope="session")
def s16():
    return LatticeSurface(16)


ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one summary line per acceptance criterion."""
    def record(label, ok, detail):
        ACCEPTANCE.append((label, ok, detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0][2:])):
        terminalreporter.write_line(f"{label:<5} {'PASS' if ok else 'FAIL'}  {detail}")
