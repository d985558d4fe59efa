import pytest

from kgcn.graph import LabeledGraph, adjacency_from_edges
from kgcn.numcore import Rng


def random_graph(rng: Rng, n: int, D: int, label: int = 0, p: float = 0.4, unit: bool = False) -> LabeledGraph:
    """Connected-ish random graph: a path backbone plus random extra edges."""
    edges = [(i, i + 1) for i in range(n - 1)]
    edges += [(i, j) for i in range(n) for j in range(i + 2, n) if rng.random() < p]
    X = rng.uniform(0.05, 0.95, size=(n, D)) if unit else rng.normal(size=(n, D))
    return LabeledGraph(X, adjacency_from_edges(n, edges), label)


@pytest.fixture
def rng():
    return Rng(1234)


# Acceptance criteria record one verdict line each; they are repeated in the
# terminal summary so a plain ``pytest`` run shows the whole table.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
