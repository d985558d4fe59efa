import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgcn.config import ModelConfig, TrainConfig
from kgcn.errors import KgcnError
from kgcn.graph import LabeledGraph
from kgcn.kernels import KernelSpec
from kgcn.model import KgcnModel, init_kgcn, loss_and_grad, model_to_dict
from kgcn.numcore import Rng
from kgcn.skeleton import synth_split
from kgcn.train import (
    Checkpoint,
    ablate,
    adaptive_lr,
    evaluate,
    fit,
    init_model,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    score,
    sgd_momentum_step,
    split_graphs,
    train,
    write_metrics_csv,
)


@pytest.fixture(scope="module")
def data():
    return synth_split(3, 6, 3, seed=5, M=2)


# -- optimizer -----------------------------------------------------------------

def test_momentum_zero_is_gradient_descent():
    p, v = sgd_momentum_step(np.array([1.0, 2.0]), np.array([0.5, -1.0]), np.zeros(2), 0.1, 0.0)
    assert np.allclose(p, [0.95, 2.1]) and np.allclose(v, [-0.05, 0.1])


def test_momentum_coasts():
    p, v = sgd_momentum_step(np.array([1.0]), np.zeros(1), np.array([0.2]), 0.1, 0.9)
    assert p[0] == pytest.approx(1.18) and v[0] == pytest.approx(0.18)


def test_quadratic_bowl():
    theta, vel = np.array([1.0]), np.zeros(1)
    ref_t, ref_v = 1.0, 0.0
    for _ in range(200):
        theta, vel = sgd_momentum_step(theta, theta.copy(), vel, 0.1, 0.9)
        ref_v = 0.9 * ref_v - 0.1 * ref_t
        ref_t = ref_t + ref_v
    assert abs(theta[0]) < 1e-3
    assert theta[0] == ref_t


def test_momentum_dicts_and_errors():
    p, v = sgd_momentum_step({"a": np.ones(2)}, {"a": np.ones(2)}, {"a": np.zeros(2)}, 0.5, 0.9)
    assert p["a"].tolist() == [0.5, 0.5]
    with pytest.raises(KgcnError, match="shape-mismatch"):
        sgd_momentum_step(np.ones(2), np.ones(3), np.zeros(2), 0.1, 0.9)
    with pytest.raises(KgcnError, match="shape-mismatch"):
        sgd_momentum_step({"a": np.ones(1)}, {"b": np.ones(1)}, {"a": np.ones(1)}, 0.1, 0.9)


def test_adaptive_lr_examples():
    assert adaptive_lr(0.1, [1.0, 0.9, 0.7], (1e-3, 1.0)) == pytest.approx(0.099)
    assert adaptive_lr(0.1, [1.0, 0.7, 0.6], (1e-3, 1.0)) == pytest.approx(0.1 / 0.99)
    assert adaptive_lr(1.0, [1.0, 0.7, 0.6], (1e-3, 1.0)) == 1.0
    assert adaptive_lr(0.1, [1.0, 0.9], (1e-3, 1.0)) == 0.1


@given(st.floats(1e-4, 10.0), st.lists(st.floats(0, 100), min_size=0, max_size=8))
def test_adaptive_lr_stays_in_bounds(nu, losses):
    lo, hi = 1e-3, 1.0
    out = adaptive_lr(min(max(nu, lo), hi), losses, (lo, hi))
    assert lo <= out <= hi


def test_train_config_validation():
    with pytest.raises(KgcnError, match="bad-config"):
        TrainConfig(momentum=1.0)
    with pytest.raises(KgcnError, match="bad-config"):
        TrainConfig(batch=0)
    with pytest.raises(KgcnError, match="bad-config"):
        TrainConfig(lr0=0.5, lr_bounds=[0.01, 0.1])


# -- evaluation ----------------------------------------------------------------

def test_score_perfect_and_constant():
    labels = np.repeat(np.arange(4), 5)
    r = score(labels, labels, 4)
    assert r.accuracy == 1.0 and np.array_equal(r.confusion, 5 * np.eye(4, dtype=int))
    r = score(np.zeros(20, dtype=int), labels, 4)
    assert r.accuracy == 0.25 and r.micro == 0.25


def test_score_macro_differs_from_micro():
    r = score([0, 0, 0, 1], [0, 0, 0, 0], 2)
    assert r.accuracy == 0.75
    r = score([0, 0, 0, 0], [0, 0, 0, 1], 2)
    assert r.accuracy == 0.5 and r.micro == 0.75


def test_evaluate_hand_toy():
    # linear kernel, one filter, v = [1], alpha = 1: pooled feature = relu(mean signal)
    A = np.ones((1, 1))
    graphs = [LabeledGraph([[x]], A, y, name=str(i)) for i, (x, y) in enumerate([(2.0, 0), (-1.0, 1), (0.5, 1)])]
    m = KgcnModel(KernelSpec("linear"), np.ones((1, 1, 1)), np.ones((1, 1)), np.array([[1.0], [-1.0]]))
    # features 2, 0, 0.5 -> logits (2,-2), (0,0) tie -> class 0, (0.5,-0.5)
    r = evaluate(m, graphs)
    assert r.confusion.tolist() == [[1, 0], [2, 0]]
    assert r.accuracy == 0.5 and r.per_class.tolist() == [1.0, 0.0]
    with pytest.raises(KgcnError, match="empty-split"):
        evaluate(m, [])


# -- training ------------------------------------------------------------------

def test_zero_epochs(data):
    graphs, split = data
    model, hist = train(graphs, split, TrainConfig(epochs=0, seed=1))
    assert all(v == [] for v in hist.values())
    tr, _ = split_graphs(graphs, split)
    expect = init_model(tr, TrainConfig(seed=1), KernelSpec(), ModelConfig(), 3)
    assert np.array_equal(model.support, expect.support)


def test_determinism(data):
    graphs, split = data
    cfg = TrainConfig(epochs=4, batch=5, seed=3)
    a = train(graphs, split, cfg)[1]
    b = train(graphs, split, cfg)[1]
    assert a == b
    c = train(graphs, split, TrainConfig(epochs=4, batch=5, seed=4))[1]
    assert a != c


def test_resume_equivalence(data, tmp_path):
    graphs, split = data
    full = fit(graphs, split, TrainConfig(epochs=6, batch=4, seed=2))
    part = fit(graphs, split, TrainConfig(epochs=3, batch=4, seed=2))
    save_checkpoint(Checkpoint.from_state(part, {"seed": 2}), tmp_path / "ck.json")
    resumed = fit(graphs, split, TrainConfig(epochs=6, batch=4, seed=2), resume=load_checkpoint(tmp_path / "ck.json").to_state())
    assert resumed.history == full.history
    for k, v in full.model.params().items():
        assert np.array_equal(resumed.model.params()[k], v)


def test_history_fields(data):
    graphs, split = data
    hist = train(graphs, split, TrainConfig(epochs=3, batch=5, seed=1))[1]
    assert hist["epoch"] == [1, 2, 3]
    assert hist["lr"][0] == 0.1
    assert all(0 <= a <= 1 for a in hist["train_acc"] + hist["test_acc"])


def test_training_does_not_touch_graphs(data):
    graphs, split = data
    before = [g.signals.copy() for g in graphs]
    train(graphs, split, TrainConfig(epochs=2, batch=5, seed=1))
    assert all(np.array_equal(b, g.signals) for b, g in zip(before, graphs))
    with pytest.raises(ValueError):
        graphs[0].signals[0, 0] = 1.0


def test_small_step_decreases_batch_loss(data):
    graphs, split = data
    tr, _ = split_graphs(graphs, split)
    m = init_kgcn(tr, KernelSpec(), 5, 4, 3, Rng(0))
    loss, grads, _ = loss_and_grad(m, tr)
    params, _ = sgd_momentum_step(m.params(), grads, {k: np.zeros_like(v) for k, v in grads.items()}, 1e-6, 0.9)
    assert loss_and_grad(m.with_params(params), tr)[0] < loss


def test_diverged():
    # inner products of these signals overflow, so the very first loss is not finite
    graphs = [LabeledGraph([[1e160, 1e160]], np.ones((1, 1)), i % 2, name=str(i)) for i in range(4)]
    split = {"train": [g.name for g in graphs]}
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(KgcnError, match="diverged.*epoch 0"):
            train(graphs, split, TrainConfig(epochs=2, seed=0), spec=KernelSpec("linear"), model_cfg=ModelConfig(init="plain"))


def test_fit_errors(data):
    graphs, split = data
    with pytest.raises(KgcnError, match="empty-split"):
        train(graphs, {"train": [], "test": []}, TrainConfig(epochs=1, seed=0))
    with pytest.raises(KgcnError, match="bad-split"):
        train(graphs, {"train": ["nope"]}, TrainConfig(epochs=1, seed=0))
    with pytest.raises(KgcnError, match="bad-config"):
        train(graphs, split, TrainConfig(epochs=1, seed=0), model_cfg=ModelConfig(kind="mlp"))


def test_sgcn_trains(data):
    from kgcn.config import KpcaConfig

    graphs, split = data
    tr, _ = split_graphs(graphs, split)
    m = init_model(tr, TrainConfig(seed=0), KernelSpec("gaussian"), ModelConfig(kind="sgcn"), 3, KpcaConfig(H=4))
    state = fit(graphs, split, TrainConfig(epochs=3, batch=5, seed=0), model=m)
    assert state.model.kind == "sgcn" and len(state.history["loss"]) == 3
    with pytest.raises(KgcnError, match="bad-config"):
        fit(graphs, split, TrainConfig(epochs=1, seed=0, ablation="FSV_LA"), model=m)


def test_ablate_modes(data):
    graphs, split = data
    out = ablate(graphs, split, TrainConfig(epochs=2, batch=5, seed=0))
    assert list(out) == ["FSV_LA", "LSV_FA", "LSV_LA"]
    assert all(0 <= v <= 1 for v in out.values())


# -- persistence ---------------------------------------------------------------

def test_checkpoint_round_trip(data, tmp_path):
    graphs, split = data
    state = fit(graphs, split, TrainConfig(epochs=2, batch=5, seed=1))
    path = tmp_path / "ck.json"
    save_checkpoint(Checkpoint.from_state(state, {"seed": 1}), path)
    back = load_checkpoint(path)
    assert model_to_dict(back.model) == model_to_dict(state.model)
    assert back.history == state.history and back.schedule["nu"] == state.nu
    for k, v in state.velocity.items():
        assert np.array_equal(back.optimizer[k], v)
    keys = set(json.loads(path.read_text()))
    assert {"version", "config", "model", "optimizer", "schedule", "epoch", "history"} <= keys


def test_checkpoint_errors(data, tmp_path):
    graphs, split = data
    state = fit(graphs, split, TrainConfig(epochs=1, batch=5, seed=1))
    path = tmp_path / "ck.json"
    save_checkpoint(Checkpoint.from_state(state, {}), path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(KgcnError, match="corrupt-checkpoint"):
        load_checkpoint(path)
    d = json.loads(text)
    d["version"] = 99
    path.write_text(json.dumps(d))
    with pytest.raises(KgcnError, match="unsupported-version"):
        load_checkpoint(path)
    del d["model"]
    d["version"] = 1
    path.write_text(json.dumps(d))
    with pytest.raises(KgcnError, match="corrupt-checkpoint"):
        load_checkpoint(path)


def test_dataset_round_trip(data, tmp_path):
    graphs, split = data
    save_dataset(tmp_path / "d.json", graphs, split, {"seed": 5})
    back, sp = load_dataset(tmp_path / "d.json")
    assert sp == split and all(a.same_as(b) for a, b in zip(graphs, back))


def test_metrics_csv(tmp_path):
    hist = {"epoch": [1, 2], "loss": [0.5, 0.25], "lr": [0.1, 0.1], "train_acc": [0.5, 1.0], "test_acc": [None, None]}
    write_metrics_csv(hist, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines() == [
        "epoch,loss,lr,train_acc,test_acc",
        "1,0.5,0.1,0.5,",
        "2,0.25,0.1,1.0,",
    ]
