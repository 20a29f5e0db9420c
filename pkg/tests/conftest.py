import numpy as np
import pytest

from agepde.core import AgeFunction, AgeGrid, Competition, ModelParams

GOLDEN = (5 ** 0.5 - 1) / 2


@pytest.fixture
def grid():
    return AgeGrid(30.0, 6000)


@pytest.fixture
def const_a(grid):
    return ModelParams.constant(grid, 2, 0, 1, 1)


@pytest.fixture
def const_b(grid):
    return ModelParams.constant(grid, 1, 1, 1, 1)


@pytest.fixture
def const_a_comp(grid):
    return ModelParams.constant(grid, 2, 0, 1, 1, Competition(c1=1, ctilde2=1))


def indicator(grid, lo, hi):
    a = grid.nodes
    return AgeFunction(grid, ((a >= lo) & (a <= hi)).astype(float))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
