"""Graphs with row-stochastic adjacency and r-hop neighborhoods."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import raiser
from .numcore import as_matrix

_fail = raiser("graph")

ROW_SUM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    """Node signals ``(n, D)``, row-stochastic adjacency ``(n, n)`` and a label."""

    signals: np.ndarray
    adjacency: np.ndarray
    label: int
    node_names: Optional[tuple] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = as_matrix(self.signals, name="signals")
        a = as_matrix(self.adjacency, rows=s.shape[0], cols=s.shape[0], name="adjacency")
        if np.any(a < 0):
            _fail("negative-weight", f"graph {self.name!r} has negative adjacency entries")
        sums = a.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            _fail("not-stochastic", f"graph {self.name!r} adjacency rows do not sum to 1")
        if self.node_names is not None and len(self.node_names) != s.shape[0]:
            _fail("dim-mismatch", "node_names length differs from node count")
        s.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "signals", s)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "label", int(self.label))
        if self.node_names is not None:
            object.__setattr__(self, "node_names", tuple(self.node_names))

    @property
    def n(self) -> int:
        return self.signals.shape[0]

    @property
    def dim(self) -> int:
        return self.signals.shape[1]

    def with_signals(self, signals) -> "LabeledGraph":
        return LabeledGraph(signals, self.adjacency, self.label, self.node_names, self.name, dict(self.meta))

    def same_as(self, other: "LabeledGraph") -> bool:
        return (
            self.label == other.label
            and np.array_equal(self.signals, other.signals)
            and np.array_equal(self.adjacency, other.adjacency)
            and self.node_names == other.node_names
        )


def add_self_loops(W) -> np.ndarray:
    W = np.array(W, dtype=np.float64)
    np.fill_diagonal(W, np.maximum(np.diag(W), 1.0))
    return W


def row_normalize(W) -> np.ndarray:
    W = as_matrix(W, name="weights")
    if W.shape[0] != W.shape[1]:
        _fail("dim-mismatch", f"adjacency must be square, got {W.shape}")
    if np.any(W < 0):
        _fail("negative-weight", "row_normalize expects nonnegative weights")
    sums = W.sum(axis=1)
    zero = np.flatnonzero(sums == 0)
    if zero.size:
        _fail("isolated-node", f"node {int(zero[0])} has no edges")
    return W / sums[:, None]


def adjacency_from_edges(n: int, edges: Sequence[tuple[int, int]], self_loops: bool = True) -> np.ndarray:
    """Unweighted undirected edges -> row-stochastic adjacency."""
    W = np.zeros((n, n))
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            _fail("bad-node", f"edge ({i}, {j}) outside {n} nodes")
        W[i, j] = W[j, i] = 1.0
    if self_loops:
        W = add_self_loops(W)
    return row_normalize(W)


def hop_adjacency(A, r: int) -> np.ndarray:
    """``A`` raised to the ``r``-th matrix power."""
    if int(r) != r or r < 1:
        _fail("bad-hop", f"hop count must be an integer >= 1, got {r}")
    A = np.asarray(A, dtype=np.float64)
    return np.linalg.matrix_power(A, int(r))


def neighborhood(A, u: int, r: int) -> set[int]:
    A = np.asarray(A, dtype=np.float64)
    if not 0 <= u < A.shape[0]:
        _fail("bad-node", f"node {u} outside [0, {A.shape[0]})")
    # boolean reachability avoids underflow of tiny products in A^r
    reach = np.zeros(A.shape[0], dtype=bool)
    reach[u] = True
    step = A > 0
    for _ in range(_check_hops(r)):
        reach = step[reach].any(axis=0)
    return set(np.flatnonzero(reach).tolist())


def _check_hops(r):
    if int(r) != r or r < 1:
        _fail("bad-hop", f"hop count must be an integer >= 1, got {r}")
    return int(r)


def check_permutation(pi, n: int) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (n,) or not np.array_equal(np.sort(pi), np.arange(n)):
        _fail("bad-permutation", f"not a permutation of {n} nodes")
    return pi.astype(np.int64)


def permute(G: LabeledGraph, pi) -> LabeledGraph:
    """Reindex nodes: node ``i`` of the result is node ``pi[i]`` of ``G``."""
    pi = check_permutation(pi, G.n)
    names = None if G.node_names is None else tuple(G.node_names[i] for i in pi)
    return LabeledGraph(
        G.signals[pi],
        G.adjacency[np.ix_(pi, pi)],
        G.label,
        names,
        G.name,
        dict(G.meta),
    )


def inverse_permutation(pi) -> np.ndarray:
    pi = np.asarray(pi)
    inv = np.empty_like(pi)
    inv[pi] = np.arange(pi.size)
    return inv
