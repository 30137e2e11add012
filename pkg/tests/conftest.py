import numpy as np
import pytest

from helpers import path_graph
from securegsr.graph import Graph, laplacian


@pytest.fixture
def path3() -> Graph:
    return path_graph(3)


@pytest.fixture
def path3_lap(path3) -> np.ndarray:
    return laplacian(path3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
