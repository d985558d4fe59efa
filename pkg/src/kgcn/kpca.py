"""Kernel PCA node features for the standard-GCN baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import raiser
from .kernels import KernelSpec, gram
from .numcore import Rng

_fail = raiser("kpca")

EIG_FLOOR = 1e-10
JACOBI_MAX_N = 128


def center_gram(G) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    rows = G.mean(axis=1, keepdims=True)
    cols = G.mean(axis=0, keepdims=True)
    return G - rows - cols + G.mean()


def _round_robin(n: int):
    """Disjoint index pairs per round; every pair appears once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            yield np.array(pairs, dtype=np.int64)
        players = [players[0], players[-1]] + players[1:-1]


def jacobi_eig(S, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations, disjoint pairs rotated together.

    Returns unsorted ``(eigvals, eigvecs)``; stops once the off-diagonal
    Frobenius norm drops below ``tol * ||S||_F`` or after ``max_sweeps``.
    """
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    rounds = list(_round_robin(n))
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off < tol * scale:
            break
        for pairs in rounds:
            p, q = pairs[:, 0], pairs[:, 1]
            apq = A[p, q]
            live = np.abs(apq) > 1e-300
            if not np.any(live):
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Rp, Rq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Rp - s[:, None] * Rq
            A[q, :] = s[:, None] * Rp + c[:, None] * Rq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
    return np.diag(A).copy(), V


def sym_eig(S, method: str = "jacobi") -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Ties keep original index order; each eigenvector is signed so that its
    largest-magnitude entry is positive. ``method`` is ``"jacobi"``,
    ``"lapack"`` or ``"auto"`` (Jacobi up to ``JACOBI_MAX_N`` rows).
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        _fail("dim-mismatch", f"expected a square matrix, got {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10:
        _fail("not-symmetric", "matrix is not symmetric within 1e-10")
    S = 0.5 * (S + S.T)
    if method == "auto":
        method = "jacobi" if S.shape[0] <= JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        w, V = jacobi_eig(S)
    elif method == "lapack":
        w, V = np.linalg.eigh(S)
    else:
        _fail("bad-config", f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    if V.size:
        lead = V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])]
        V = V * np.where(lead < 0, -1.0, 1.0)
    return w, V


@dataclass(frozen=True, eq=False)
class KpcaProjector:
    spec: KernelSpec
    anchors: np.ndarray  # (n, D)
    col_means: np.ndarray  # (n,) training Gram column means
    total_mean: float
    axes: np.ndarray  # (n, H), eigenvectors scaled by 1/sqrt(eigval)
    eigvals: np.ndarray  # (H,)

    @property
    def H(self) -> int:
        return self.axes.shape[1]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def project(self, X) -> np.ndarray:
        """Rows of ``X`` -> ``(m, H)`` features."""
        K = gram(self.spec, X, self.anchors)
        K = K - K.mean(axis=1, keepdims=True) - self.col_means[None, :] + self.total_mean
        return K @ self.axes

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "anchors": self.anchors.tolist(),
            "col_means": self.col_means.tolist(),
            "total_mean": self.total_mean,
            "axes": self.axes.tolist(),
            "eigvals": self.eigvals.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "KpcaProjector":
        return cls(
            KernelSpec.from_dict(d["spec"]),
            np.array(d["anchors"], dtype=np.float64),
            np.array(d["col_means"], dtype=np.float64),
            float(d["total_mean"]),
            np.array(d["axes"], dtype=np.float64).reshape(len(d["anchors"]), -1),
            np.array(d["eigvals"], dtype=np.float64),
        )


def feature_cap(spec: KernelSpec, D: int) -> Optional[int]:
    """Dimension of the explicit feature map, when it is finite and small."""
    if spec.kind == "linear":
        return D
    if spec.kind == "polynomial":
        return D ** spec.p
    return None


def kpca_fit(
    spec: KernelSpec,
    X,
    H: int,
    max_anchors: Optional[int] = None,
    rng: Optional[Rng] = None,
    method: str = "auto",
) -> KpcaProjector:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        _fail("dim-mismatch", f"expected (n, D) data, got {X.shape}")
    if int(H) != H or H < 1:
        _fail("bad-dim", f"H must be a positive integer, got {H}")
    H = int(H)
    n, D = X.shape
    cap = feature_cap(spec, D)
    if cap is not None and H > cap:
        _fail("overdim", f"{spec.kind} kernel feature space has {cap} dimensions, H={H}")
    if max_anchors is not None and n > max_anchors:
        rng = rng if rng is not None else Rng(0)
        X = X[np.sort(rng.sample(n, max_anchors))]
    G = gram(spec, X)
    w, V = sym_eig(center_gram(G), method=method)
    positive = int(np.sum(w > EIG_FLOOR * w[0])) if w.size and w[0] > 0 else 0
    if H > positive:
        _fail("overdim", f"centered Gram has {positive} usable eigenvalues, H={H}")
    return KpcaProjector(
        spec=spec,
        anchors=X,
        col_means=G.mean(axis=0),
        total_mean=float(G.mean()),
        axes=V[:, :H] / np.sqrt(w[:H]),
        eigvals=w[:H].copy(),
    )


def kpca_project(proj: KpcaProjector, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != proj.dim:
        _fail("dim-mismatch", f"expected a vector of length {proj.dim}")
    return proj.project(x[None, :])[0]
