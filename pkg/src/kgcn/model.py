"""Kernel GCN and standard GCN layers with readout, loss and gradients.

KGCN node feature for filter ``k`` at node ``u``::

    relu( sum_u' Ar[u, u'] * (1/N) * sum_i alpha[k, i] * kappa(s(u'), v[k, i]) )

with ``Ar`` the r-hop adjacency. A model may carry a fixed positive
``scale``; kernel responses then enter as ``kappa / scale``, a constant
reparameterization of ``alpha`` (``scale = 1`` gives the plain form).
SGCN replaces the kernel expansion by a linear filter on KPCA node
features: ``relu((Ar @ F) @ W.T)``.
Both pool node features over the graph and apply a bias-free linear
classifier followed by softmax.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import raiser
from .graph import LabeledGraph, hop_adjacency
from .kernels import KernelSpec, gram, gram_vjp
from .kpca import KpcaProjector
from .numcore import Rng, softmax_rows

_fail = raiser("model")

ABLATION_MODES = ("LSV_LA", "LSV_FA", "FSV_LA")
POOLS = ("mean", "max")
INITS = ("scaled", "plain")
_INIT_PROBE = 256  # training nodes used to gauge kernel response scale at init


@dataclass(frozen=True, eq=False)
class KgcnModel:
    spec: KernelSpec
    support: np.ndarray  # (K, N, D)
    alphas: np.ndarray  # (K, N)
    classifier: np.ndarray  # (C, K)
    hops: int = 1
    pool: str = "mean"
    scale: float = 1.0  # fixed kernel response scale; responses enter as kappa / scale

    kind = "kgcn"

    def __post_init__(self):
        K, N, D = np.shape(self.support)
        if np.shape(self.alphas) != (K, N):
            _fail("dim-mismatch", f"alphas {np.shape(self.alphas)} vs support {(K, N, D)}")
        if np.shape(self.classifier)[1] != K:
            _fail("dim-mismatch", f"classifier {np.shape(self.classifier)} vs K={K}")
        _check_head(self.hops, self.pool)
        if not (math.isfinite(self.scale) and self.scale > 0):
            _fail("bad-config", f"scale must be positive and finite, got {self.scale}")

    @property
    def K(self) -> int:
        return self.support.shape[0]

    @property
    def N(self) -> int:
        return self.support.shape[1]

    @property
    def norm(self) -> float:
        """Divisor of the inner sum: ``N * scale``."""
        return self.N * self.scale

    @property
    def D(self) -> int:
        return self.support.shape[2]

    @property
    def C(self) -> int:
        return self.classifier.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"support": self.support, "alphas": self.alphas, "classifier": self.classifier}

    def with_params(self, params: dict) -> "KgcnModel":
        return replace(self, **{k: np.asarray(v, dtype=np.float64) for k, v in params.items()})


@dataclass(frozen=True, eq=False)
class SgcnModel:
    weights: np.ndarray  # (K, H)
    classifier: np.ndarray  # (C, K)
    hops: int = 1
    pool: str = "mean"
    projector: Optional[KpcaProjector] = None

    kind = "sgcn"

    def __post_init__(self):
        if np.shape(self.classifier)[1] != np.shape(self.weights)[0]:
            _fail("dim-mismatch", f"classifier {np.shape(self.classifier)} vs weights {np.shape(self.weights)}")
        _check_head(self.hops, self.pool)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def H(self) -> int:
        return self.weights.shape[1]

    @property
    def C(self) -> int:
        return self.classifier.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "classifier": self.classifier}

    def with_params(self, params: dict) -> "SgcnModel":
        return replace(self, **{k: np.asarray(v, dtype=np.float64) for k, v in params.items()})


Model = Union[KgcnModel, SgcnModel]


def _check_head(hops, pool):
    if int(hops) != hops or hops < 1:
        _fail("bad-hop", f"hops must be an integer >= 1, got {hops}")
    if pool not in POOLS:
        _fail("bad-config", f"pool must be one of {POOLS}, got {pool!r}")


# ---------------------------------------------------------------- init


def init_kgcn(
    train_graphs: Sequence[LabeledGraph],
    spec: KernelSpec,
    K: int,
    N: int,
    C: int,
    rng: Rng,
    hops: int = 1,
    pool: str = "mean",
    init: str = "scaled",
) -> KgcnModel:
    """Support vectors drawn from training node signals; classifier
    ``U(+-sqrt(6/(K+C)))``; ``alpha`` has standard deviation ``1/sqrt(N)``.

    ``init="plain"``: ``alpha ~ N(0, 1/N)`` and unit response scale.

    ``init="scaled"``: the response scale is the mean ``|kappa|`` between the
    support vectors and a sample of training nodes, and each ``alpha`` takes
    the sign of its support vector's mean response. Filters start alive and
    a given step size means the same thing whatever the kernel's range.
    """
    if K < 1 or N < 1 or C < 1:
        _fail("bad-config", f"K, N, C must be positive, got {K}, {N}, {C}")
    if init not in INITS:
        _fail("bad-config", f"init must be one of {INITS}, got {init!r}")
    nodes = np.concatenate([g.signals for g in train_graphs])
    total = K * N
    if nodes.shape[0] >= total:
        idx = rng.sample(nodes.shape[0], total)
    else:
        idx = np.array([rng.below(nodes.shape[0]) for _ in range(total)])
    support = nodes[idx].reshape(K, N, nodes.shape[1]).copy()
    alphas = rng.normal(0.0, 1.0 / math.sqrt(N), size=(K, N))
    scale = 1.0
    if init == "scaled":
        probe = nodes[rng.sample(nodes.shape[0], min(nodes.shape[0], _INIT_PROBE))]
        response = gram(spec, probe, support.reshape(total, -1))
        scale = max(float(np.abs(response).mean()), 1e-12)
        alphas = np.abs(alphas) * np.where(response.mean(axis=0) < 0, -1.0, 1.0).reshape(K, N)
    bound = math.sqrt(6.0 / (K + C))
    classifier = rng.uniform(-bound, bound, size=(C, K))
    return KgcnModel(spec, support, alphas, classifier, hops, pool, scale)


def init_sgcn(H: int, K: int, C: int, rng: Rng, hops: int = 1, pool: str = "mean", projector=None) -> SgcnModel:
    wb = math.sqrt(6.0 / (H + K))
    cb = math.sqrt(6.0 / (K + C))
    weights = rng.uniform(-wb, wb, size=(K, H))
    classifier = rng.uniform(-cb, cb, size=(C, K))
    return SgcnModel(weights, classifier, hops, pool, projector)


def constrain(m: Model) -> Model:
    """Project parameters back into the kernel's domain after an update.

    Histogram intersection is only defined on [0, 1], so its support vectors
    are clipped there; every other model passes through unchanged.
    """
    if m.kind == "kgcn" and m.spec.kind == "hi":
        return replace(m, support=np.clip(m.support, 0.0, 1.0))
    return m


# ---------------------------------------------------------------- layers


def _check_dim(G: LabeledGraph, D: int):
    if G.dim != D:
        _fail("dim-mismatch", f"graph {G.name!r} signals have D={G.dim}, model expects {D}")


def kgcn_inner(G: LabeledGraph, m: KgcnModel) -> np.ndarray:
    """``(1/N) sum_i alpha[k,i] kappa(s(u), v[k,i])`` per node, shape ``(n, K)``."""
    _check_dim(G, m.D)
    Kmat = gram(m.spec, G.signals, m.support.reshape(m.K * m.N, m.D)).reshape(G.n, m.K, m.N)
    return np.einsum("ukn,kn->uk", Kmat, m.alphas) / m.norm


def kgcn_preactivation(G: LabeledGraph, m: KgcnModel) -> np.ndarray:
    return hop_adjacency(G.adjacency, m.hops) @ kgcn_inner(G, m)


def kgcn_conv(G: LabeledGraph, m: KgcnModel) -> np.ndarray:
    return np.maximum(kgcn_preactivation(G, m), 0.0)


def kgcn_conv_logexp(G: LabeledGraph, m: KgcnModel) -> np.ndarray:
    """Pre-activation through ``(1/N) sum_u' exp(log A[u,u'] + log S[u',k])``,
    where ``S`` is the undivided inner sum; zero adjacency entries are skipped."""
    _check_dim(G, m.D)
    A = hop_adjacency(G.adjacency, m.hops)
    Kmat = gram(m.spec, G.signals, m.support.reshape(m.K * m.N, m.D)).reshape(G.n, m.K, m.N)
    S = np.einsum("ukn,kn->uk", Kmat, m.alphas)
    contributing = np.any(A > 0, axis=0)
    bad = np.argwhere((S <= 0) & contributing[:, None])
    if bad.size:
        u, k = (int(x) for x in bad[0])
        _fail("log-domain-violation", f"inner sum {S[u, k]:.3g} <= 0 at node {u}, filter {k}")
    logS = np.log(np.where(S > 0, S, 1.0))
    out = np.zeros((G.n, m.K))
    for u in range(G.n):
        nz = np.flatnonzero(A[u] > 0)
        out[u] = np.exp(np.log(A[u, nz])[:, None] + logS[nz]).sum(axis=0)
    return out / m.norm


def sgcn_conv(features, A, m: SgcnModel) -> np.ndarray:
    F = np.asarray(features, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] != m.H:
        _fail("dim-mismatch", f"features {F.shape} vs H={m.H}")
    if A.shape != (F.shape[0], F.shape[0]):
        _fail("dim-mismatch", f"adjacency {A.shape} vs {F.shape[0]} nodes")
    return np.maximum((hop_adjacency(A, m.hops) @ F) @ m.weights.T, 0.0)


def node_features(G: LabeledGraph, m: Model, projector: Optional[KpcaProjector] = None) -> np.ndarray:
    if m.kind == "kgcn":
        return kgcn_conv(G, m)
    projector = projector if projector is not None else m.projector
    F = projector.project(G.signals) if projector is not None else G.signals
    return sgcn_conv(F, G.adjacency, m)


def pool_nodes(h: np.ndarray, pool: str) -> np.ndarray:
    return h.max(axis=-2) if pool == "max" else h.mean(axis=-2)


def readout_forward(G: LabeledGraph, m: Model, projector: Optional[KpcaProjector] = None):
    """``(logits, probs)`` for one graph."""
    pooled = pool_nodes(node_features(G, m, projector), m.pool)
    logits = m.classifier @ pooled
    return logits, softmax_rows(logits)


# ------------------------------------------------------------ batched pass


class GraphBatch:
    """Graphs stacked by node count with r-hop adjacencies precomputed.

    With a projector the stored signals are KPCA features, as an SGCN
    carrying that projector expects.
    """

    def __init__(self, graphs: Sequence[LabeledGraph] = (), hops: int = 1, projector=None):
        self.size = len(graphs)
        self.hops = hops
        self.projector = projector
        self.labels = np.array([g.label for g in graphs], dtype=np.int64)
        by_n: dict[int, list[int]] = {}
        for i, g in enumerate(graphs):
            by_n.setdefault(g.n, []).append(i)
        self.groups = []
        for idx in by_n.values():
            X = np.stack([graphs[i].signals for i in idx])
            if projector is not None:
                B, n, D = X.shape
                X = projector.project(X.reshape(B * n, D)).reshape(B, n, -1)
            A = np.stack([hop_adjacency(graphs[i].adjacency, hops) for i in idx])
            self.groups.append((np.array(idx), X, A))

    def subset(self, sel) -> "GraphBatch":
        """Batch of the graphs at positions ``sel``, renumbered in that order."""
        sel = np.asarray(sel, dtype=np.int64)
        pos = np.full(self.size, -1)
        pos[sel] = np.arange(len(sel))
        out = GraphBatch((), self.hops, self.projector)
        out.size = len(sel)
        out.labels = self.labels[sel]
        for idx, X, A in self.groups:
            keep = pos[idx] >= 0
            if keep.any():
                out.groups.append((pos[idx[keep]], X[keep], A[keep]))
        return out


def as_batch(graphs, m: Model) -> GraphBatch:
    projector = m.projector if m.kind == "sgcn" else None
    if isinstance(graphs, GraphBatch):
        if graphs.hops != m.hops or graphs.projector is not projector:
            _fail("bad-batch", "batch was built for a different hop count or projector")
        return graphs
    return GraphBatch(graphs, m.hops, projector)


def _forward_group(m: Model, X, A):
    """Returns pooled features and a cache for the backward pass."""
    B, n, D = X.shape
    if m.kind == "kgcn":
        _require(D == m.D, f"signals have D={D}, model expects {m.D}")
        V = m.support.reshape(m.K * m.N, m.D)
        flat = X.reshape(B * n, D)
        Kflat = gram(m.spec, flat, V)
        Kmat = Kflat.reshape(B, n, m.K, m.N)
        z = (Kmat * m.alphas).sum(axis=-1) / m.norm
        pre = A @ z
        cache = (flat, V, Kflat, Kmat)
    else:
        _require(D == m.H, f"features have H={D}, model expects {m.H}")
        agg = A @ X
        pre = agg @ m.weights.T
        cache = (agg,)
    h = np.maximum(pre, 0.0)
    return pool_nodes(h, m.pool), (pre, h, cache)


def _require(ok, msg):
    if not ok:
        _fail("dim-mismatch", msg)


def predict_logits(m: Model, graphs) -> np.ndarray:
    batch = as_batch(graphs, m)
    out = np.empty((batch.size, m.C))
    for idx, X, A in batch.groups:
        pooled, _ = _forward_group(m, X, A)
        out[idx] = pooled @ m.classifier.T
    return out


def loss_and_grad(m: Model, graphs, labels=None):
    """Mean cross-entropy over ``graphs`` and its gradient for every parameter.

    ``graphs`` is a sequence of graphs or a prebuilt ``GraphBatch``.
    Returns ``(loss, grads, logits)``.
    """
    batch = as_batch(graphs, m)
    if batch.size == 0:
        _fail("empty-batch", "no graphs in batch")
    labels = batch.labels if labels is None else np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= m.C):
        _fail("bad-label", f"labels must lie in [0, {m.C})")
    total = batch.size
    grads = {k: np.zeros_like(v) for k, v in m.params().items()}
    logits_all = np.empty((total, m.C))
    loss = 0.0
    for idx, X, A in batch.groups:
        pooled, (pre, h, cache) = _forward_group(m, X, A)
        logits = pooled @ m.classifier.T
        logits_all[idx] = logits
        y = labels[idx]
        rows = np.arange(len(idx))
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        loss += float(np.sum(logz - shifted[rows, y]))
        dlog = np.exp(shifted - logz[:, None])
        dlog[rows, y] -= 1.0
        dlog /= total
        grads["classifier"] += dlog.T @ pooled
        dpooled = dlog @ m.classifier  # (B, K)
        if m.pool == "max":
            dh = np.zeros_like(h)
            arg = np.argmax(h, axis=1)  # (B, K)
            b, k = np.meshgrid(np.arange(h.shape[0]), np.arange(h.shape[2]), indexing="ij")
            dh[b, arg, k] = dpooled
        else:
            dh = np.broadcast_to(dpooled[:, None, :] / h.shape[1], h.shape)
        dpre = dh * (pre > 0)
        At = A.transpose(0, 2, 1)
        if m.kind == "kgcn":
            flat, V, Kflat, Kmat = cache
            dz = At @ dpre  # (B, n, K)
            grads["alphas"] += (dz.reshape(-1, m.K, 1) * Kmat.reshape(-1, m.K, m.N)).sum(axis=0) / m.norm
            dK = (dz[:, :, :, None] * (m.alphas / m.norm)).reshape(Kflat.shape)
            _, dV = gram_vjp(m.spec, flat, V, dK, G=Kflat)
            grads["support"] += dV.reshape(m.support.shape)
        else:
            (agg,) = cache
            grads["weights"] += dpre.reshape(-1, m.K).T @ agg.reshape(-1, agg.shape[-1])
    return loss / total, grads, logits_all


def backward(G: LabeledGraph, m: Model, label: Optional[int] = None) -> dict[str, np.ndarray]:
    """Gradient of the single-graph cross-entropy."""
    _, grads, _ = loss_and_grad(m, [G], None if label is None else [label])
    return grads


# --------------------------------------------------------- accounting


def param_count(m: Model) -> int:
    if m.kind == "kgcn":
        return (m.D + 1) * m.N * m.K + m.C * m.K
    return m.H * m.K + m.C * m.K


def frozen_params(mode: str) -> tuple[str, ...]:
    if mode not in ABLATION_MODES:
        _fail("bad-config", f"ablation mode must be one of {ABLATION_MODES}, got {mode!r}")
    return {"LSV_LA": (), "LSV_FA": ("alphas",), "FSV_LA": ("support",)}[mode]


def ablation_mask(m: Model, mode: str):
    """Return a function zeroing the gradients that ``mode`` freezes."""
    frozen = frozen_params(mode)
    if frozen and m.kind != "kgcn":
        _fail("bad-config", f"ablation {mode} only applies to KGCN models")

    def mask(grads: dict) -> dict:
        return {k: (np.zeros_like(v) if k in frozen else v) for k, v in grads.items()}

    return mask


def trainable_count(m: Model, mode: str = "LSV_LA") -> int:
    frozen = frozen_params(mode)
    return int(sum(v.size for k, v in m.params().items() if k not in frozen))


# ------------------------------------------------------- serialization


def model_to_dict(m: Model) -> dict:
    out = {"kind": m.kind, "hops": m.hops, "pool": m.pool}
    out["params"] = {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in m.params().items()}
    if m.kind == "kgcn":
        out["kernel"] = m.spec.to_dict()
        out["scale"] = m.scale
    elif m.projector is not None:
        out["projector"] = m.projector.to_dict()
    return out


def model_from_dict(d: dict) -> Model:
    params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d["params"].items()}
    if d["kind"] == "kgcn":
        return KgcnModel(
            KernelSpec.from_dict(d["kernel"]), hops=d["hops"], pool=d["pool"], scale=d.get("scale", 1.0), **params
        )
    if d["kind"] == "sgcn":
        proj = KpcaProjector.from_dict(d["projector"]) if d.get("projector") else None
        return SgcnModel(hops=d["hops"], pool=d["pool"], projector=proj, **params)
    _fail("bad-model", f"unknown model kind {d['kind']!r}")
