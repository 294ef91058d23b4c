import numpy as np
import pytest

from adagrad_control.problems import example1, example2


@pytest.fixture(scope="session")
def small_problem():
    """Example 1 on a coarse grid, cheap enough for property tests."""
    return example1(n_cells=12, n_t=20)


@pytest.fixture(scope="session")
def ex1_problem():
    return example1()


@pytest.fixture(scope="session")
def small_cell():
    """Battery cell on a coarse grid."""
    return example2(n_cells=(6, 12), n_t=48)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("criterion ")[1]):
            terminalreporter.write_line(line)
