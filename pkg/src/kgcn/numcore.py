"""Numerical primitives: seeded PCG32 randomness, stable reductions and the
central finite-difference oracle used to check every analytic gradient.

Matrices throughout the package are plain ``float64`` numpy arrays.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import raiser

_fail = raiser("numcore")

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_PCG_MULT = 6364136223846793005


def as_matrix(x, rows=None, cols=None, name="matrix") -> np.ndarray:
    """Copy ``x`` into a finite 2-D float64 array, optionally checking shape."""
    m = np.array(x, dtype=np.float64)
    if m.ndim != 2:
        _fail("dim-mismatch", f"{name} must be 2-D, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        _fail("dim-mismatch", f"{name} has {m.shape[0]} rows, expected {rows}")
    if cols is not None and m.shape[1] != cols:
        _fail("dim-mismatch", f"{name} has {m.shape[1]} cols, expected {cols}")
    ensure_finite(m, name)
    return m


def ensure_finite(x, what="value", code="non-finite"):
    if not np.all(np.isfinite(x)):
        _fail(code, f"{what} contains NaN or Inf")
    return x


class Rng:
    """PCG32 (XSH-RR 64/32) generator.

    The stream depends only on ``(seed, stream)``; bulk draws are bit-identical
    to the same number of sequential ``next_u32`` calls.
    """

    def __init__(self, seed: int = 0, stream: int = 0):
        self.inc = ((int(stream) << 1) | 1) & _MASK64
        self.state = 0
        self.next_u32()
        self.state = (self.state + (int(seed) & _MASK64)) & _MASK64
        self.next_u32()

    @classmethod
    def from_state(cls, state: int, inc: int) -> "Rng":
        rng = cls.__new__(cls)
        rng.state = int(state) & _MASK64
        rng.inc = int(inc) & _MASK64
        return rng

    def get_state(self) -> tuple[int, int]:
        return self.state, self.inc

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * _PCG_MULT + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def u32_array(self, n: int) -> np.ndarray:
        """``n`` consecutive outputs as uint64 values in [0, 2**32)."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        # old_k = a^k * s + c_k, built by doubling: c_{k+m} = a^k c_m + c_k
        pows = np.ones(1, dtype=np.uint64)
        offs = np.zeros(1, dtype=np.uint64)
        a_m, c_m = _PCG_MULT, self.inc
        while pows.size < n:
            pows, offs = (
                np.concatenate([pows, pows * np.uint64(a_m)]),
                np.concatenate([offs, pows * np.uint64(c_m) + offs]),
            )
            c_m = (a_m * c_m + c_m) & _MASK64
            a_m = (a_m * a_m) & _MASK64
        pows, offs = pows[:n], offs[:n]
        old = pows * np.uint64(self.state) + offs
        # advance the scalar state by n steps
        a_n, c_n = 1, 0
        a, c, k = _PCG_MULT, self.inc, n
        while k:
            if k & 1:
                a_n, c_n = (a_n * a) & _MASK64, (c_n * a + c) & _MASK64
            c = (c * a + c) & _MASK64
            a = (a * a) & _MASK64
            k >>= 1
        self.state = (a_n * self.state + c_n) & _MASK64
        xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(_MASK32)
        rot = old >> np.uint64(59)
        left = (np.uint64(32) - rot) & np.uint64(31)
        return ((xorshifted >> rot) | (xorshifted << left)) & np.uint64(_MASK32)

    def random(self, size=None):
        """Uniform doubles in [0, 1) with 53 random bits."""
        n = 1 if size is None else int(np.prod(size))
        words = self.u32_array(2 * n)
        hi = (words[0::2] >> np.uint64(5)).astype(np.float64)
        lo = (words[1::2] >> np.uint64(6)).astype(np.float64)
        out = (hi * 67108864.0 + lo) / 9007199254740992.0
        return float(out[0]) if size is None else out.reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, loc=0.0, scale=1.0, size=None):
        """Gaussian draws via Box-Muller, both outputs of each pair used."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u = self.random(2 * pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        t = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(t)
        z[1::2] = r * np.sin(t)
        z = loc + scale * z[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound)."""
        if bound <= 0:
            _fail("bad-bound", f"bound must be positive, got {bound}")
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def shuffle(self, items: list) -> list:
        """In-place Fisher-Yates shuffle; returns ``items``."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def permutation(self, n: int) -> np.ndarray:
        return np.array(self.shuffle(list(range(n))), dtype=np.int64)

    def sample(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            _fail("bad-bound", f"cannot sample {k} of {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:k], dtype=np.int64)


def log_sum_exp(xs) -> float:
    x = np.asarray(xs, dtype=np.float64).ravel()
    if x.size == 0:
        _fail("empty-reduction", "log_sum_exp of an empty sequence")
    m = float(np.max(x))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(x - m))))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    """Return ``(-log p[label], p)`` with ``p = softmax(logits)``."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= label < z.size:
        _fail("bad-label", f"label {label} outside [0, {z.size})")
    shifted = z - np.max(z)
    lse = math.log(float(np.sum(np.exp(shifted))))
    logp = shifted - lse
    return float(-logp[label]), np.exp(logp)


def rel_error(a, b) -> np.ndarray:
    """Elementwise ``|a-b| / max(1e-8, |a|+|b|)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def finite_diff_grad(f: Callable[[np.ndarray], float], theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if h <= 0:
        _fail("bad-step", f"step must be positive, got {h}")
    theta = np.array(theta, dtype=np.float64)
    flat = theta.ravel()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(theta))
        flat[i] = orig - h
        fm = float(f(theta))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            _fail("non-finite-objective", f"objective not finite around coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(theta.shape)
