"""Kernel catalog.

Every kernel has three faces here:

* a closed form (``kernel_eval`` for one pair, ``gram`` for matrices),
* a decomposition into four scalar activations ``(s1, s2, s3, s4)`` such that
  ``k(u, v) = s3(sum_d s2(s1(u_d) * s4(v_d)))`` (``sigma_quad`` and
  ``kernel_eval_neural``),
* analytic derivatives (``kernel_grads`` per pair, ``gram_vjp`` batched).

The implicit feature map is never materialized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import raiser

_fail = raiser("kernels")

INNER_PRODUCT = ("linear", "polynomial", "sigmoid", "tanh")
DISTANCE = ("gaussian", "laplacian", "power", "imq", "log", "cauchy")
KINDS = INNER_PRODUCT + DISTANCE + ("hi",)

_ALIASES = {
    "poly": "polynomial",
    "inversemultiquadric": "imq",
    "inverse_multiquadric": "imq",
    "histogramintersection": "hi",
    "histogram_intersection": "hi",
}

# per-kind defaults; the source gives none
_DEFAULTS = {
    "gaussian": {"beta": 1.0},
    "laplacian": {"beta": 1.0},
    "sigmoid": {"beta": 1.0},
    "hi": {"beta": 50.0},
    "polynomial": {"p": 2},
    "power": {"p": 2},
    "log": {"p": 2},
    "tanh": {"a": 1.0, "b": 0.0},
    "imq": {"b": 1.0},
    "cauchy": {"sigma2": 1.0},
}


def canonical_kind(kind: str) -> str:
    k = str(kind).strip().lower().replace("-", "").replace(" ", "")
    k = _ALIASES.get(k, k)
    if k not in KINDS:
        _fail("bad-kernel", f"unknown kernel kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    Unset hyperparameters take the per-kind defaults; only those relevant to
    ``kind`` are validated.
    """

    kind: str = "gaussian"
    beta: Optional[float] = None
    p: Optional[int] = None
    a: Optional[float] = None
    b: Optional[float] = None
    sigma2: Optional[float] = None

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name, value in _DEFAULTS.get(kind, {}).items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        rel = self.relevant()
        if "beta" in rel and not float(self.beta) > 0:
            _fail("bad-hyperparameter", f"{kind}: beta must be > 0, got {self.beta}")
        if "p" in rel:
            if int(self.p) != self.p or self.p < 1:
                _fail("bad-hyperparameter", f"{kind}: p must be an integer >= 1, got {self.p}")
            object.__setattr__(self, "p", int(self.p))
        if "sigma2" in rel and not float(self.sigma2) > 0:
            _fail("bad-hyperparameter", f"cauchy: sigma2 must be > 0, got {self.sigma2}")
        if kind == "imq" and float(self.b) == 0.0:
            _fail("bad-hyperparameter", "imq: b must be non-zero")

    def relevant(self) -> tuple[str, ...]:
        return tuple(_DEFAULTS.get(self.kind, {}))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        out.update({k: getattr(self, k) for k in self.relevant()})
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**{k: v for k, v in d.items() if v is not None})


def _check_pair(spec: KernelSpec, u, v):
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        _fail("dim-mismatch", f"vectors of length {u.size} and {v.size}")
    if spec.kind == "hi":
        _check_unit_range(u, "u")
        _check_unit_range(v, "v")
    return u, v


def _check_unit_range(x, what):
    if x.size and (np.min(x) < 0.0 or np.max(x) > 1.0):
        _fail("range-violation", f"histogram intersection needs {what} in [0,1]")


# ---------------------------------------------------------------- closed forms


def kernel_eval(spec: KernelSpec, u, v) -> float:
    u, v = _check_pair(spec, u, v)
    k = spec.kind
    if k == "hi":
        return float(np.sum(np.minimum(u, v)))
    if k in INNER_PRODUCT:
        t = float(np.dot(u, v))
        if k == "linear":
            return t
        if k == "polynomial":
            return t ** spec.p
        if k == "sigmoid":
            return _sigmoid(spec.beta * t)
        return math.tanh(spec.a * t + spec.b)
    d = u - v
    s = float(np.dot(d, d))
    if k == "gaussian":
        return math.exp(-spec.beta * s)
    if k == "laplacian":
        return math.exp(-spec.beta * math.sqrt(s))
    if k == "power":
        return -(math.sqrt(s) ** spec.p)
    if k == "imq":
        return 1.0 / math.sqrt(s + spec.b ** 2)
    if k == "log":
        return -math.log(math.sqrt(s) ** spec.p + 1.0)
    return 1.0 / (1.0 + s / spec.sigma2)


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def kernel_grads(spec: KernelSpec, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(dk/du, dk/dv)`` for one pair.

    Non-smooth points get a fixed subgradient: zero at zero distance for
    Laplacian, Power and Log; for HI each coordinate goes to ``u`` when
    ``u_d <= v_d`` and to ``v`` otherwise.
    """
    u, v = _check_pair(spec, u, v)
    k = spec.kind
    if k == "hi":
        du = (u <= v).astype(np.float64)
        return du, 1.0 - du
    if k in INNER_PRODUCT:
        t = float(np.dot(u, v))
        if k == "linear":
            g = 1.0
        elif k == "polynomial":
            g = spec.p * t ** (spec.p - 1)
        elif k == "sigmoid":
            s = _sigmoid(spec.beta * t)
            g = spec.beta * s * (1.0 - s)
        else:
            th = math.tanh(spec.a * t + spec.b)
            g = spec.a * (1.0 - th * th)
        return g * v, g * u
    d = u - v
    s = float(np.dot(d, d))
    fp = _dist_profile_slope(spec, s)
    du = 2.0 * fp * d
    return du, -du


def _dist_profile_slope(spec: KernelSpec, s):
    """Derivative of the distance profile ``f`` with ``k = f(||u-v||^2)``.

    Works elementwise on arrays; returns 0 where the slope is singular at s=0.
    """
    s = np.asarray(s, dtype=np.float64)
    k = spec.kind
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    if k == "gaussian":
        out = -spec.beta * np.exp(-spec.beta * s)
    elif k == "laplacian":
        r = np.sqrt(safe)
        out = np.where(pos, -spec.beta * np.exp(-spec.beta * r) / (2.0 * r), 0.0)
    elif k == "power":
        half = spec.p / 2.0
        if spec.p == 2:
            out = np.full_like(s, -1.0)
        else:
            out = np.where(pos, -half * safe ** (half - 1.0), 0.0)
    elif k == "imq":
        out = -0.5 * (s + spec.b ** 2) ** -1.5
    elif k == "log":
        half = spec.p / 2.0
        if spec.p == 2:
            out = -1.0 / (s + 1.0)
        else:
            out = np.where(pos, -half * safe ** (half - 1.0) / (safe ** half + 1.0), 0.0)
    else:
        out = -(1.0 / spec.sigma2) / (1.0 + s / spec.sigma2) ** 2
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------- matrix versions


def _as_rows(X, name):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        _fail("dim-mismatch", f"{name} must be 2-D")
    return X


def gram(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """``G[i, j] = k(X[i], Y[j])``; ``Y`` defaults to ``X``."""
    X = _as_rows(X, "X")
    Y = X if Y is None else _as_rows(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        _fail("dim-mismatch", f"X has {X.shape[1]} columns, Y has {Y.shape[1]}")
    k = spec.kind
    if k == "hi":
        _check_gram_range(X, "X")
        _check_gram_range(Y, "Y")
        return np.minimum(X[:, None, :], Y[None, :, :]).sum(axis=-1)
    if k in INNER_PRODUCT:
        t = X @ Y.T
        if k == "linear":
            return t
        if k == "polynomial":
            return t ** spec.p
        if k == "sigmoid":
            return _sigmoid_arr(spec.beta * t)
        return np.tanh(spec.a * t + spec.b)
    s = _sq_dists(X, Y)
    return _dist_profile(spec, s)


def _check_gram_range(X, name):
    bad = np.argwhere((X < 0.0) | (X > 1.0))
    if bad.size:
        i, d = bad[0]
        _fail("range-violation", f"histogram intersection needs {name}[{i},{d}]={X[i, d]} in [0,1]")


def _sq_dists(X, Y):
    """Squared distances; entries subject to cancellation are recomputed exactly."""
    xx = (X * X).sum(axis=1)
    yy = (Y * Y).sum(axis=1)
    scale = xx[:, None] + yy[None, :]
    s = scale - 2.0 * (X @ Y.T)
    near = np.nonzero(s <= 1e-6 * scale)
    if near[0].size:
        d = X[near[0]] - Y[near[1]]
        s[near] = np.einsum("ij,ij->i", d, d)
    return np.maximum(s, 0.0)


def _sigmoid_arr(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _dist_profile(spec, s):
    k = spec.kind
    if k == "gaussian":
        return np.exp(-spec.beta * s)
    if k == "laplacian":
        return np.exp(-spec.beta * np.sqrt(s))
    if k == "power":
        return -(s if spec.p == 2 else np.sqrt(s) ** spec.p)
    if k == "imq":
        return 1.0 / np.sqrt(s + spec.b ** 2)
    if k == "log":
        return -np.log1p(s if spec.p == 2 else np.sqrt(s) ** spec.p)
    return 1.0 / (1.0 + s / spec.sigma2)


def gram_vjp(spec: KernelSpec, X, Y, W, G=None) -> tuple[np.ndarray, np.ndarray]:
    """Pull back cotangent ``W`` (shape of the Gram) to ``(dX, dY)``.

    ``dX[i] = sum_j W[i,j] dk(X_i,Y_j)/dX_i`` and symmetrically for ``dY``.
    ``G`` may pass a precomputed ``gram(spec, X, Y)``.
    """
    X = _as_rows(X, "X")
    Y = _as_rows(Y, "Y")
    W = np.asarray(W, dtype=np.float64)
    k = spec.kind
    if k == "hi":
        to_x = X[:, None, :] <= Y[None, :, :]
        dX = np.einsum("ij,ijd->id", W, to_x)
        dY = np.einsum("ij,ijd->jd", W, ~to_x)
        return dX, dY
    if k in INNER_PRODUCT:
        t = X @ Y.T
        if k == "linear":
            g = W
        elif k == "polynomial":
            g = W * (spec.p * t ** (spec.p - 1))
        elif k == "sigmoid":
            s = _sigmoid_arr(spec.beta * t) if G is None else G
            g = W * (spec.beta * s * (1.0 - s))
        else:
            th = np.tanh(spec.a * t + spec.b) if G is None else G
            g = W * (spec.a * (1.0 - th * th))
        return g @ Y, g.T @ X
    c = W * _dist_profile_slope(spec, _sq_dists(X, Y))
    # d/dX_i = 2 f' (X_i - Y_j);  d/dY_j = 2 f' (Y_j - X_i)
    dX = 2.0 * (c.sum(axis=1)[:, None] * X - c @ Y)
    dY = 2.0 * (c.sum(axis=0)[:, None] * Y - c.T @ X)
    return dX, dY


# -------------------------------------------------------- activation quads


@dataclass(frozen=True)
class Activation:
    """Named scalar activation.

    ``log_fn`` gives ``log(fn(t))`` for activations whose output is a
    (possibly huge) positive exponential; ``from_log`` evaluates the
    activation from the log of its argument. Both let the composition run in
    the log domain without forming overflowing intermediates.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    log_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    from_log: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __call__(self, t):
        return self.fn(t)


@dataclass(frozen=True)
class SigmaQuad:
    s1: Activation
    s2: Activation
    s3: Activation
    s4: Activation

    @property
    def names(self) -> tuple[str, str, str, str]:
        return self.s1.name, self.s2.name, self.s3.name, self.s4.name


_IDENTITY = Activation("t", lambda t: t)
_EXP = Activation("exp(t)", np.exp, log_fn=lambda t: t)
_NEG_EXP = Activation("exp(-t)", lambda t: np.exp(-t), log_fn=lambda t: -t)
_LOG_SQ = Activation("log(t)^2", lambda t: np.log(t) ** 2, from_log=lambda lt: lt * lt)


def sigma_quad(spec: KernelSpec) -> SigmaQuad:
    """The four activations realizing ``spec`` as standard neural units."""
    k = spec.kind
    if k in INNER_PRODUCT:
        if k == "linear":
            s3 = _IDENTITY
        elif k == "polynomial":
            p = spec.p
            s3 = Activation(f"t^{p}", lambda t: t ** p)
        elif k == "sigmoid":
            beta = spec.beta
            s3 = Activation(f"1/(1+exp(-{beta} t))", lambda t: 1.0 / (1.0 + np.exp(-beta * t)))
        else:
            a, b = spec.a, spec.b
            s3 = Activation(f"tanh({a} t + {b})", lambda t: np.tanh(a * t + b))
        return SigmaQuad(_IDENTITY, _IDENTITY, s3, _IDENTITY)
    if k == "hi":
        beta = spec.beta

        def s1_log(t):
            return np.exp(beta * (1.0 - t))

        def s2_from_log(lt):
            # lt = log(x); s2(x) = -(1/beta) log(log x) + 1
            return -np.log(lt) / beta + 1.0

        s1 = Activation(
            f"exp(exp({beta}(1-t)))",
            lambda t: np.exp(np.exp(beta * (1.0 - t))),
            log_fn=s1_log,
        )
        s2 = Activation(
            f"-(1/{beta}) log(log(t)) + 1",
            lambda t: -np.log(np.log(t)) / beta + 1.0,
            from_log=s2_from_log,
        )
        return SigmaQuad(s1, s2, _IDENTITY, s1)
    if k == "gaussian":
        beta = spec.beta
        s3 = Activation(f"exp(-{beta} t)", lambda t: np.exp(-beta * t))
    elif k == "laplacian":
        beta = spec.beta
        s3 = Activation(f"exp(-{beta} sqrt(t))", lambda t: np.exp(-beta * np.sqrt(t)))
    elif k == "power":
        p = spec.p
        s3 = Activation(f"-t^({p}/2)", lambda t: -(t ** (p / 2.0)))
    elif k == "imq":
        b2 = spec.b ** 2
        s3 = Activation(f"1/sqrt(t+{b2})", lambda t: 1.0 / np.sqrt(t + b2))
    elif k == "log":
        p = spec.p
        s3 = Activation(f"-log(t^({p}/2)+1)", lambda t: -np.log(t ** (p / 2.0) + 1.0))
    else:
        sig2 = spec.sigma2
        s3 = Activation(f"1/(1+t/{sig2})", lambda t: 1.0 / (1.0 + t / sig2))
    return SigmaQuad(_EXP, _LOG_SQ, s3, _NEG_EXP)


def kernel_eval_neural(spec: KernelSpec, u, v, log_domain: bool = True) -> float:
    """Evaluate ``s3(sum_d s2(s1(u_d) * s4(v_d)))``.

    With ``log_domain`` the product ``s1(u_d) * s4(v_d)`` is carried as a sum
    of logs whenever both activations expose ``log_fn`` and ``s2`` accepts a
    log argument; this is the same function, minus the overflow of the
    double exponential used by histogram intersection. With
    ``log_domain=False`` every activation is applied literally.
    """
    u, v = _check_pair(spec, u, v)
    q = sigma_quad(spec)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if log_domain and q.s1.log_fn and q.s4.log_fn and q.s2.from_log:
            inner = q.s2.from_log(q.s1.log_fn(u) + q.s4.log_fn(v))
        else:
            a = q.s1(u)
            _check_activation(a, "s1", u)
            w = q.s4(v)
            _check_activation(w, "s4", v)
            inner = q.s2(a * w)
        _check_activation(inner, "s2", u)
        out = np.asarray(q.s3(np.sum(inner)), dtype=np.float64)
    if not np.isfinite(out):
        _fail("activation-overflow", "s3 produced a non-finite value")
    return float(out)


def _check_activation(values, stage, src):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        d = int(bad[0])
        _fail("activation-overflow", f"{stage} is non-finite at dimension {d} (input {src[d]!r})")
