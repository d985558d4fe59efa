import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kgcn.errors import KgcnError
from kgcn.kernels import (
    DISTANCE,
    INNER_PRODUCT,
    KINDS,
    KernelSpec,
    gram,
    gram_vjp,
    kernel_eval,
    kernel_eval_neural,
    kernel_grads,
    sigma_quad,
)
from kgcn.numcore import Rng, finite_diff_grad, rel_error


def pair(kind, rng, D=5):
    if kind == "hi":
        return rng.uniform(0.05, 0.95, size=D), rng.uniform(0.05, 0.95, size=D)
    return rng.uniform(-1, 1, size=D), rng.uniform(-1, 1, size=D)


# -- closed forms -------------------------------------------------------------

def test_closed_form_examples():
    assert kernel_eval(KernelSpec("linear"), [1, 2], [3, 4]) == 11.0
    for beta in (0.1, 1.0, 7.0):
        assert kernel_eval(KernelSpec("gaussian", beta=beta), [0.3, -2], [0.3, -2]) == 1.0
    assert kernel_eval(KernelSpec("hi"), [0.2, 0.7], [0.5, 0.3]) == pytest.approx(0.5, abs=1e-15)


def test_closed_forms_by_hand():
    u, v = np.array([1.0, 2.0]), np.array([0.0, 0.5])
    d2 = 1.0 + 2.25
    t = 1.0
    cases = {
        KernelSpec("polynomial", p=3): t**3,
        KernelSpec("sigmoid", beta=2.0): 1 / (1 + math.exp(-2 * t)),
        KernelSpec("tanh", a=0.5, b=0.1): math.tanh(0.6),
        KernelSpec("gaussian", beta=0.5): math.exp(-0.5 * d2),
        KernelSpec("laplacian", beta=0.5): math.exp(-0.5 * math.sqrt(d2)),
        KernelSpec("power", p=3): -math.sqrt(d2) ** 3,
        KernelSpec("imq", b=2.0): 1 / math.sqrt(d2 + 4),
        KernelSpec("log", p=1): -math.log(math.sqrt(d2) + 1),
        KernelSpec("cauchy", sigma2=2.0): 1 / (1 + d2 / 2),
    }
    for spec, want in cases.items():
        assert kernel_eval(spec, u, v) == pytest.approx(want, rel=1e-14), spec.kind


def test_errors():
    with pytest.raises(KgcnError, match="dim-mismatch"):
        kernel_eval(KernelSpec("linear"), [1, 2], [1, 2, 3])
    with pytest.raises(KgcnError, match="range-violation"):
        kernel_eval(KernelSpec("hi"), [1.2, 0.0], [0.5, 0.5])
    with pytest.raises(KgcnError, match="bad-kernel"):
        KernelSpec("rbf-ish")
    with pytest.raises(KgcnError, match="bad-hyperparameter"):
        KernelSpec("imq", b=0.0)
    with pytest.raises(KgcnError, match="bad-hyperparameter"):
        KernelSpec("gaussian", beta=-1.0)


def test_spec_aliases_and_roundtrip():
    assert KernelSpec("Poly").kind == "polynomial"
    assert KernelSpec("inverse-multiquadric").kind == "imq"
    s = KernelSpec("tanh", a=2.0)
    assert KernelSpec.from_dict(s.to_dict()) == s


# -- neural consistency ---------------------------------------------------------

def test_sigma_quad_rows():
    assert sigma_quad(KernelSpec("linear")).names == ("t", "t", "t", "t")
    poly = sigma_quad(KernelSpec("polynomial", p=3))
    assert poly.names[0] == poly.names[1] == poly.names[3] == "t"
    assert poly.s3(2.0) == 8.0
    lap = sigma_quad(KernelSpec("laplacian", beta=0.7))
    t = 1.3
    assert lap.s1(t) == pytest.approx(math.exp(t))
    assert lap.s2(t) == pytest.approx(math.log(t) ** 2)
    assert lap.s3(t) == pytest.approx(math.exp(-0.7 * math.sqrt(t)))
    assert lap.s4(t) == pytest.approx(math.exp(-t))
    hi = sigma_quad(KernelSpec("hi", beta=10.0))
    assert hi.s3(0.4) == 0.4
    assert hi.s4(0.9) == hi.s1(0.9)


@pytest.mark.parametrize("kind", [k for k in KINDS if k != "hi"])
def test_neural_equals_closed_form(kind):
    rng = Rng(KINDS.index(kind))
    spec = KernelSpec(kind)
    for _ in range(50):
        u, v = pair(kind, rng, 8)
        assert abs(kernel_eval_neural(spec, u, v) - kernel_eval(spec, u, v)) <= 1e-12 * max(1.0, abs(kernel_eval(spec, u, v)))


def test_neural_examples():
    g = KernelSpec("gaussian", beta=1.0)
    assert kernel_eval_neural(g, [1, 0], [0, 1]) == pytest.approx(math.exp(-2), abs=1e-12)
    rng = Rng(0)
    lin = KernelSpec("linear")
    for _ in range(10):
        u, v = pair("linear", rng)
        assert kernel_eval_neural(lin, u, v) == pytest.approx(kernel_eval(lin, u, v), abs=1e-15)
    hi = KernelSpec("hi", beta=50.0)
    assert abs(kernel_eval_neural(hi, [0.2, 0.7], [0.5, 0.3]) - 0.5) <= 0.02 * 2


def test_hi_error_bound_per_dimension():
    # each coordinate contributes at most log(2)/beta of error
    rng = Rng(5)
    for beta in (10.0, 50.0):
        spec = KernelSpec("hi", beta=beta)
        for _ in range(30):
            u, v = pair("hi", rng, 12)
            err = abs(kernel_eval_neural(spec, u, v) - kernel_eval(spec, u, v))
            assert err <= 12 * math.log(2) / beta + 1e-12


def test_literal_hi_overflows():
    spec = KernelSpec("hi", beta=50.0)
    with pytest.raises(KgcnError, match="activation-overflow"):
        kernel_eval_neural(spec, [0.2, 0.7], [0.5, 0.3], log_domain=False)
    # small beta stays finite and agrees with the log-domain path
    small = KernelSpec("hi", beta=1.0)
    a = kernel_eval_neural(small, [0.2, 0.7], [0.5, 0.3], log_domain=False)
    b = kernel_eval_neural(small, [0.2, 0.7], [0.5, 0.3])
    assert a == pytest.approx(b, rel=1e-10)


# -- gradients ------------------------------------------------------------------

def test_grad_examples():
    u, v = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, 4.0])
    du, dv = kernel_grads(KernelSpec("linear"), u, v)
    assert np.array_equal(du, v) and np.array_equal(dv, u)
    du, dv = kernel_grads(KernelSpec("gaussian"), u, u)
    assert np.all(du == 0) and np.all(dv == 0)


def test_hi_subgradient_convention():
    du, dv = kernel_grads(KernelSpec("hi"), [0.2, 0.5, 0.9], [0.4, 0.5, 0.1])
    assert du.tolist() == [1.0, 1.0, 0.0]
    assert dv.tolist() == [0.0, 0.0, 1.0]


@pytest.mark.parametrize("kind", KINDS)
def test_grads_match_finite_differences(kind):
    spec = KernelSpec(kind)
    rng = Rng(100 + KINDS.index(kind))
    for _ in range(20):
        u, v = pair(kind, rng)
        du, dv = kernel_grads(spec, u, v)
        fu = finite_diff_grad(lambda t: kernel_eval(spec, t, v), u)
        fv = finite_diff_grad(lambda t: kernel_eval(spec, u, t), v)
        assert rel_error(du, fu).max() < 1e-5
        assert rel_error(dv, fv).max() < 1e-5


# -- Gram matrices ------------------------------------------------------------

def test_gram_examples():
    rng = Rng(3)
    X = rng.normal(size=(6, 4))
    assert np.allclose(gram(KernelSpec("linear"), X), X @ X.T, atol=1e-14)
    assert np.all(np.diag(gram(KernelSpec("gaussian"), X)) == 1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_gram_matches_loop(kind):
    rng = Rng(7 + KINDS.index(kind))
    spec = KernelSpec(kind)
    X, _ = pair(kind, rng, 15)
    Y, _ = pair(kind, rng, 12)
    X, Y = X.reshape(5, 3), Y.reshape(4, 3)
    G = gram(spec, X, Y)
    loop = np.array([[kernel_eval(spec, x, y) for y in Y] for x in X])
    assert np.allclose(G, loop, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_gram_vjp_matches_pairwise_grads(kind):
    rng = Rng(50 + KINDS.index(kind))
    spec = KernelSpec(kind)
    X = np.stack([pair(kind, rng, 3)[0] for _ in range(4)])
    Y = np.stack([pair(kind, rng, 3)[0] for _ in range(3)])
    W = rng.normal(size=(4, 3))
    dX, dY = gram_vjp(spec, X, Y, W)
    eX, eY = np.zeros_like(X), np.zeros_like(Y)
    for i in range(4):
        for j in range(3):
            du, dv = kernel_grads(spec, X[i], Y[j])
            eX[i] += W[i, j] * du
            eY[j] += W[i, j] * dv
    assert np.allclose(dX, eX, atol=1e-12) and np.allclose(dY, eY, atol=1e-12)


def test_gram_near_duplicate_rows_exact():
    # expansion-form distances must not lose tiny separations
    X = np.array([[1e3, 1e3, 1e3]])
    Y = X + np.array([[1e-6, 0.0, 0.0]])
    G = gram(KernelSpec("laplacian", beta=1e6), X, Y)
    assert G[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-6)


@pytest.mark.parametrize("kind", [k for k in KINDS if k not in ("sigmoid", "tanh", "power", "log")])
def test_symmetric_psd_kernels(kind):
    # positive semi-definite families give symmetric PSD Gram matrices
    rng = Rng(KINDS.index(kind))
    X = rng.uniform(0.05, 0.95, size=(10, 4))
    G = gram(KernelSpec(kind), X)
    assert np.allclose(G, G.T, atol=1e-14)
    assert np.linalg.eigvalsh(G).min() > -1e-9 * max(1.0, np.abs(G).max())


finite = st.floats(-3, 3, allow_nan=False)


@given(hnp.arrays(np.float64, 4, elements=finite), hnp.arrays(np.float64, 4, elements=finite))
@settings(max_examples=60, deadline=None)
def test_symmetry_and_bounds(u, v):
    for kind in DISTANCE + INNER_PRODUCT:
        spec = KernelSpec(kind)
        assert kernel_eval(spec, u, v) == pytest.approx(kernel_eval(spec, v, u), rel=1e-12, abs=1e-12)
    for kind in ("gaussian", "laplacian", "cauchy"):
        k = kernel_eval(KernelSpec(kind), u, v)
        assert 0.0 <= k <= 1.0
    assert 0.0 < kernel_eval(KernelSpec("imq"), u, v) <= 1.0
    assert kernel_eval(KernelSpec("power"), u, v) <= 0.0
    assert kernel_eval(KernelSpec("log"), u, v) <= 0.0


@given(hnp.arrays(np.float64, 6, elements=st.floats(0, 1)), hnp.arrays(np.float64, 6, elements=st.floats(0, 1)))
@settings(max_examples=60, deadline=None)
def test_hi_bounds(u, v):
    k = kernel_eval(KernelSpec("hi"), u, v)
    assert 0.0 <= k <= min(u.sum(), v.sum()) + 1e-12
