import numpy as np
import pytest

from cwhyp import conjugacy, systems


@pytest.fixture(scope="session")
def torus0():
    return systems.torus(0.0)


@pytest.fixture(scope="session")
def sphere0():
    return systems.sphere(0.0)


@pytest.fixture(scope="session")
def q1():
    """Correction field of f_1 (series evaluator)."""
    return conjugacy.default_field(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(RESULTS):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
