"""Self-checks shared by the CLI and the test suite.

``neural_consistency`` compares each kernel's closed form with its
four-activation neural form; ``gradcheck`` compares the analytic backward
pass with central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import LabeledGraph, adjacency_from_edges
from .kernels import KINDS, KernelSpec, kernel_eval, kernel_eval_neural
from .model import init_kgcn, loss_and_grad
from .numcore import Rng, finite_diff_grad, rel_error

EXACT_KINDS = tuple(k for k in KINDS if k != "hi")
HI_BETAS = (10.0, 25.0, 50.0, 100.0)
NEURAL_TOL = 1e-9
GRAD_TOL = 1e-4


@dataclass
class ConsistencyReport:
    exact: dict[str, float]  # kind -> max abs error
    hi: dict[float, float]  # beta -> max abs error
    dim: int
    pairs: int

    @property
    def hi_bound(self) -> float:
        return 0.02 * self.dim

    @property
    def hi_monotone(self) -> bool:
        errs = [self.hi[b] for b in sorted(self.hi)]
        return all(b <= a for a, b in zip(errs, errs[1:]))

    @property
    def ok(self) -> bool:
        return (
            max(self.exact.values()) <= NEURAL_TOL
            and self.hi.get(50.0, np.inf) <= self.hi_bound
            and self.hi_monotone
        )


def _pairs(kind: str, n: int, D: int, rng: Rng):
    if kind == "hi":
        return rng.uniform(0.05, 0.95, size=(n, D)), rng.uniform(0.05, 0.95, size=(n, D))
    return rng.uniform(-1.0, 1.0, size=(n, D)), rng.uniform(-1.0, 1.0, size=(n, D))


def neural_consistency(pairs: int = 1000, seed: int = 0, dim: int = 24, betas: Sequence[float] = HI_BETAS) -> ConsistencyReport:
    """Max ``|neural - closed form|`` per kernel over seeded random pairs."""
    exact = {}
    for kind in EXACT_KINDS:
        spec = KernelSpec(kind)
        U, V = _pairs(kind, pairs, dim, Rng(seed, stream=KINDS.index(kind)))
        exact[kind] = max(abs(kernel_eval_neural(spec, u, v) - kernel_eval(spec, u, v)) for u, v in zip(U, V))
    U, V = _pairs("hi", pairs, dim, Rng(seed, stream=len(KINDS)))
    hi = {}
    for beta in betas:
        spec = KernelSpec("hi", beta=beta)
        hi[float(beta)] = max(abs(kernel_eval_neural(spec, u, v) - kernel_eval(spec, u, v)) for u, v in zip(U, V))
    return ConsistencyReport(exact, hi, dim, pairs)


@dataclass
class GradReport:
    worst: dict[str, float] = field(default_factory=dict)  # kind -> worst relative error

    @property
    def overall(self) -> float:
        return max(self.worst.values()) if self.worst else 0.0

    @property
    def ok(self) -> bool:
        return self.overall < GRAD_TOL


def _probe_graph(kind: str, rng: Rng, n: int, D: int, C: int) -> LabeledGraph:
    if kind == "hi":
        X = rng.uniform(0.05, 0.95, size=(n, D))
    else:
        X = 0.7 * rng.normal(size=(n, D))
    A = adjacency_from_edges(n, [(i, i + 1) for i in range(n - 1)])
    return LabeledGraph(X, A, rng.below(C))


def grad_errors(kind: str, seed: int, n: int = 3, K: int = 2, N: int = 2, D: int = 6, C: int = 3, h: float = 1e-5) -> dict[str, float]:
    """Worst relative error per parameter block for one seeded model."""
    rng = Rng(seed, stream=100 + KINDS.index(kind))
    G = _probe_graph(kind, rng, n, D, C)
    m = init_kgcn([G], KernelSpec(kind), K, N, C, rng)
    if kind == "hi":
        support = rng.uniform(0.05, 0.95, size=m.support.shape)
    else:
        support = m.support + 0.3 * rng.normal(size=m.support.shape)
    # Pushing |alpha| away from zero keeps every ReLU away from its kink.
    m = m.with_params({"support": support, "alphas": m.alphas + 0.5 * np.sign(m.alphas)})
    _, grads, _ = loss_and_grad(m, [G])
    out = {}
    for name, value in m.params().items():
        fd = finite_diff_grad(lambda th: loss_and_grad(m.with_params({name: th}), [G])[0], value, h)
        out[name] = float(rel_error(grads[name], fd).max())
    return out


def gradcheck(seeds: Iterable[int] = range(5), kinds: Sequence[str] = KINDS) -> GradReport:
    report = GradReport()
    for kind in kinds:
        report.worst[kind] = max(max(grad_errors(kind, s).values()) for s in seeds)
    return report
