"""Training loop, evaluation, ablation and checkpoint persistence.

SGD with momentum over shuffled mini-batches; the learning rate is updated
once per epoch from the speed of change of the epoch loss: when
``|L_t - L_{t-1}|`` grows, ``nu <- 0.99 nu``, otherwise ``nu <- nu / 0.99``,
clamped to the configured bounds.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import KpcaConfig, ModelConfig, TrainConfig
from .errors import KgcnError, raiser
from .graph import LabeledGraph
from .kernels import KernelSpec
from .kpca import kpca_fit
from .model import (
    ABLATION_MODES,
    Model,
    as_batch,
    ablation_mask,
    constrain,
    init_kgcn,
    init_sgcn,
    loss_and_grad,
    model_from_dict,
    model_to_dict,
    predict_logits,
)
from .numcore import Rng

_fail = raiser("train")

FORMAT_VERSION = 1
LR_DECAY = 0.99
HISTORY_KEYS = ("epoch", "loss", "lr", "train_acc", "test_acc")


def sgd_momentum_step(params, grads, velocity, nu: float, mu: float):
    """``v' = mu v - nu g``; ``p' = p + v'``. Works on arrays or dicts of arrays."""
    if isinstance(params, dict):
        if set(params) != set(grads) or set(params) != set(velocity):
            _fail("shape-mismatch", "params, grads and velocity keys differ")
        out = {k: sgd_momentum_step(params[k], grads[k], velocity[k], nu, mu) for k in params}
        return {k: v[0] for k, v in out.items()}, {k: v[1] for k, v in out.items()}
    p, g, v = (np.asarray(x, dtype=np.float64) for x in (params, grads, velocity))
    if not (p.shape == g.shape == v.shape):
        _fail("shape-mismatch", f"shapes {p.shape}, {g.shape}, {v.shape}")
    v_new = mu * v - nu * g
    return p + v_new, v_new


def adaptive_lr(nu: float, losses: Sequence[float], bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if len(losses) < 3:
        return min(max(nu, lo), hi)
    speed = abs(losses[-1] - losses[-2])
    prev = abs(losses[-2] - losses[-3])
    nu = nu * LR_DECAY if speed > prev else nu / LR_DECAY
    return min(max(nu, lo), hi)


# ------------------------------------------------------------- evaluation


@dataclass
class EvalResult:
    accuracy: float  # macro: mean per-class recall
    per_class: np.ndarray
    confusion: np.ndarray  # rows = true class, cols = predicted
    micro: float


def evaluate(model: Model, graphs) -> EvalResult:
    """Macro accuracy (mean per-class recall), per-class recall, confusion.

    Argmax ties resolve to the lowest class index.
    """
    batch = as_batch(graphs, model)
    if batch.size == 0:
        _fail("empty-split", "cannot evaluate on an empty list")
    pred = np.argmax(predict_logits(model, batch), axis=1)
    return score(pred, batch.labels, model.C)


def score(pred, labels, C: int) -> EvalResult:
    labels = np.asarray(labels, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    support = confusion.sum(axis=1)
    present = support > 0
    per_class = np.where(present, np.diag(confusion) / np.maximum(support, 1), np.nan)
    return EvalResult(
        accuracy=float(np.mean(per_class[present])),
        per_class=per_class,
        confusion=confusion,
        micro=float(np.mean(pred == labels)),
    )


# ------------------------------------------------------------- training


@dataclass
class TrainState:
    model: Model
    velocity: dict
    nu: float
    epoch: int = 0
    history: dict = field(default_factory=lambda: {k: [] for k in HISTORY_KEYS})


def split_graphs(dataset: Sequence[LabeledGraph], split: dict):
    by_name = {g.name: g for g in dataset}
    if len(by_name) != len(dataset):
        _fail("bad-split", "graph names are not unique")
    out = []
    for part in ("train", "test"):
        ids = split.get(part, [])
        missing = [i for i in ids if i not in by_name]
        if missing:
            _fail("bad-split", f"{part} ids not in dataset: {missing[:3]}")
        out.append([by_name[i] for i in ids])
    return out


def num_classes(graphs: Sequence[LabeledGraph]) -> int:
    return max(g.label for g in graphs) + 1


def init_model(
    train_graphs, cfg: TrainConfig, spec: KernelSpec, model_cfg: ModelConfig, C: int, kpca_cfg: Optional[KpcaConfig] = None
) -> Model:
    """Seeded model initialization. An SGCN first fits its KPCA projector on
    the training node signals."""
    rng = Rng(cfg.seed, stream=0)
    hops = model_cfg.r if model_cfg.r is not None else 1
    if model_cfg.kind == "kgcn":
        return init_kgcn(train_graphs, spec, model_cfg.K, model_cfg.N, C, rng, hops, model_cfg.pool, model_cfg.init)
    if model_cfg.kind != "sgcn":
        _fail("bad-config", f"model kind must be 'kgcn' or 'sgcn', got {model_cfg.kind!r}")
    kpca_cfg = kpca_cfg or KpcaConfig()
    nodes = np.concatenate([g.signals for g in train_graphs])
    proj = kpca_fit(spec, nodes, kpca_cfg.H, kpca_cfg.max_anchors, rng)
    return init_sgcn(kpca_cfg.H, model_cfg.K, C, rng, hops, model_cfg.pool, proj)


def fresh_state(model: Model, cfg: TrainConfig) -> TrainState:
    return TrainState(model, {k: np.zeros_like(v) for k, v in model.params().items()}, cfg.lr0)


def train(
    dataset: Sequence[LabeledGraph],
    split: dict,
    cfg: TrainConfig,
    model: Optional[Model] = None,
    spec: Optional[KernelSpec] = None,
    model_cfg: Optional[ModelConfig] = None,
    resume: Optional[TrainState] = None,
    on_epoch: Optional[Callable[[TrainState], None]] = None,
):
    """Fit ``model`` (or a fresh KGCN built from ``spec``/``model_cfg``).

    Returns ``(model, history)``. Deterministic in ``cfg.seed``; resuming from
    a ``TrainState`` taken at epoch ``e`` reproduces the uninterrupted run.
    """
    state = fit(dataset, split, cfg, model, spec, model_cfg, resume, on_epoch)
    return state.model, state.history


def fit(dataset, split, cfg: TrainConfig, model=None, spec=None, model_cfg=None, resume=None, on_epoch=None) -> TrainState:
    """``train`` returning the full final ``TrainState``."""
    train_set, test_set = split_graphs(dataset, split)
    if not train_set:
        _fail("empty-split", "training split is empty")
    dims = {g.dim for g in dataset}
    if len(dims) != 1:
        _fail("dim-mismatch", f"graphs have differing signal dimensions {sorted(dims)}")
    if resume is not None:
        state = TrainState(resume.model, dict(resume.velocity), resume.nu, resume.epoch,
                           {k: list(v) for k, v in resume.history.items()})
    else:
        if model is None:
            model = init_model(
                train_set, cfg, spec or KernelSpec(), model_cfg or ModelConfig(), num_classes(dataset)
            )
        state = fresh_state(model, cfg)
    mask = ablation_mask(state.model, cfg.ablation)
    n = len(train_set)
    train_eval = as_batch(train_set, state.model)
    test_eval = as_batch(test_set, state.model) if test_set else None
    while state.epoch < cfg.epochs:
        epoch = state.epoch
        order = Rng(cfg.seed, stream=1 + epoch).permutation(n)
        params, velocity, total = state.model.params(), state.velocity, 0.0
        for start in range(0, n, cfg.batch):
            batch = train_eval.subset(order[start:start + cfg.batch])
            loss, grads, _ = loss_and_grad(state.model, batch)
            if not math.isfinite(loss):
                _fail("diverged", f"non-finite loss at epoch {epoch}")
            total += loss * batch.size
            params, velocity = sgd_momentum_step(params, mask(grads), velocity, state.nu, cfg.momentum)
            state.model = constrain(state.model.with_params(params))
            params = state.model.params()
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            _fail("diverged", f"non-finite parameters at epoch {epoch}")
        h = state.history
        h["epoch"].append(epoch + 1)
        h["loss"].append(total / n)
        h["lr"].append(state.nu)
        h["train_acc"].append(evaluate(state.model, train_eval).accuracy)
        h["test_acc"].append(evaluate(state.model, test_eval).accuracy if test_eval else None)
        state.velocity = velocity
        state.nu = adaptive_lr(state.nu, h["loss"], cfg.bounds)
        state.epoch = epoch + 1
        if on_epoch is not None:
            on_epoch(state)
    return state


def ablate(
    dataset,
    split,
    cfg: TrainConfig,
    spec: Optional[KernelSpec] = None,
    model_cfg: Optional[ModelConfig] = None,
    modes: Sequence[str] = ("FSV_LA", "LSV_FA", "LSV_LA"),
) -> dict[str, float]:
    """Test macro accuracy per ablation mode, same seed and initialization."""
    train_set, test_set = split_graphs(dataset, split)
    target = test_set or train_set
    out = {}
    for mode in modes:
        if mode not in ABLATION_MODES:
            _fail("bad-config", f"unknown ablation mode {mode!r}")
        model, _ = train(dataset, split, dataclasses.replace(cfg, ablation=mode), spec=spec, model_cfg=model_cfg)
        out[mode] = evaluate(model, target).accuracy
    return out


def ablation_table(
    dataset,
    split,
    cfg: TrainConfig,
    kinds: Sequence[str],
    seeds: Sequence[int] = (0, 1, 2),
    model_cfg: Optional[ModelConfig] = None,
    on_row: Optional[Callable[[str, dict], None]] = None,
) -> dict[str, dict[str, float]]:
    """``{kind: {mode: accuracy averaged over seeds}}`` with default kernel
    hyperparameters; each seed fixes initialization and shuffling."""
    out = {}
    for kind in kinds:
        runs = [ablate(dataset, split, dataclasses.replace(cfg, seed=s), KernelSpec(kind), model_cfg) for s in seeds]
        out[kind] = {m: float(np.mean([r[m] for r in runs])) for m in runs[0]}
        if on_row is not None:
            on_row(kind, out[kind])
    return out


def ablation_ordered(row: dict, tol: float = 1e-12) -> bool:
    """``LSV_LA >= LSV_FA >= FSV_LA``."""
    return row["LSV_LA"] + tol >= row["LSV_FA"] and row["LSV_FA"] + tol >= row["FSV_LA"]


# ------------------------------------------------------------- persistence


@dataclass
class Checkpoint:
    config: dict
    model: Optional[Model]
    optimizer: dict  # velocity arrays
    schedule: dict  # {"nu": ...}
    epoch: int
    history: dict
    extra: dict = field(default_factory=dict)  # additional top-level keys, e.g. "dataset"
    version: int = FORMAT_VERSION

    @classmethod
    def from_state(cls, state: TrainState, config: dict) -> "Checkpoint":
        return cls(config, state.model, dict(state.velocity), {"nu": state.nu}, state.epoch, state.history)

    def to_state(self) -> TrainState:
        history = {k: list(v) for k, v in self.history.items()}
        return TrainState(self.model, dict(self.optimizer), float(self.schedule["nu"]), self.epoch, history)


def _arr(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def checkpoint_to_dict(ck: Checkpoint) -> dict:
    out = {
        "version": ck.version,
        "config": ck.config,
        "model": model_to_dict(ck.model) if ck.model is not None else None,
        "optimizer": {"velocity": {k: _arr(v) for k, v in ck.optimizer.items()}},
        "schedule": ck.schedule,
        "epoch": ck.epoch,
        "history": ck.history,
    }
    out.update(ck.extra)
    return out


def checkpoint_from_dict(d: dict) -> Checkpoint:
    if d.get("version") != FORMAT_VERSION:
        _fail("unsupported-version", f"checkpoint version {d.get('version')!r}, expected {FORMAT_VERSION}")
    try:
        base = {"version", "config", "model", "optimizer", "schedule", "epoch", "history"}
        return Checkpoint(
            config=d["config"],
            model=model_from_dict(d["model"]) if d["model"] is not None else None,
            optimizer={k: _unarr(v) for k, v in d["optimizer"].get("velocity", {}).items()},
            schedule=d["schedule"],
            epoch=int(d["epoch"]),
            history=d["history"],
            extra={k: v for k, v in d.items() if k not in base},
        )
    except (KeyError, TypeError, ValueError) as exc:
        _fail("corrupt-checkpoint", f"malformed checkpoint: {exc!r}")


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(ck: Checkpoint, path):
    atomic_write_text(path, json.dumps(checkpoint_to_dict(ck), allow_nan=False, default=_json_default))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        _fail("corrupt-checkpoint", f"{path}: {exc}")
    if not isinstance(d, dict):
        _fail("corrupt-checkpoint", f"{path}: top level is not an object")
    return checkpoint_from_dict(d)


# ---------------------------------------------------------- graph datasets


def graph_to_dict(g: LabeledGraph) -> dict:
    return {
        "name": g.name,
        "label": g.label,
        "signals": g.signals.tolist(),
        "adjacency": g.adjacency.tolist(),
        "node_names": list(g.node_names) if g.node_names is not None else None,
    }


def graph_from_dict(d: dict) -> LabeledGraph:
    return LabeledGraph(
        np.array(d["signals"], dtype=np.float64),
        np.array(d["adjacency"], dtype=np.float64),
        d["label"],
        d.get("node_names"),
        d.get("name", ""),
    )


def save_dataset(path, graphs: Sequence[LabeledGraph], split: dict, config: dict):
    """Graphs inline in a checkpoint container with no model."""
    ck = Checkpoint(config, None, {}, {}, 0, {}, extra={"dataset": {"graphs": [graph_to_dict(g) for g in graphs], "split": split}})
    save_checkpoint(ck, path)


def load_dataset(path):
    ck = load_checkpoint(path)
    data = ck.extra.get("dataset")
    if data is None:
        _fail("corrupt-checkpoint", f"{path} holds no dataset")
    try:
        graphs = [graph_from_dict(g) for g in data["graphs"]]
    except KgcnError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        _fail("corrupt-checkpoint", f"{path}: bad graph record {exc!r}")
    return graphs, data.get("split", {"train": [g.name for g in graphs], "test": []})


def write_metrics_csv(history: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_KEYS)
        for row in zip(*(history[k] for k in HISTORY_KEYS)):
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
