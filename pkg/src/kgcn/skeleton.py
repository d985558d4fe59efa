"""Skeleton sequences to trajectory graphs.

Each (person, joint) trajectory becomes one node whose signal is the
temporal-chunk descriptor: the time axis is cut into ``M`` chunks and the
mean (x, y, z) of every chunk is concatenated, giving ``D = 3 * M`` values.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import raiser
from .graph import LabeledGraph, adjacency_from_edges
from .numcore import Rng

_fail = raiser("skeleton")

SBU_PERSONS = 2
SBU_JOINTS = 15
SBU_CLASSES = (
    "approaching",
    "departing",
    "kicking",
    "pushing",
    "shaking hands",
    "hugging",
    "exchanging",
    "punching",
)
SBU_JOINT_NAMES = (
    "head", "neck", "torso",
    "l_shoulder", "l_elbow", "l_hand",
    "r_shoulder", "r_elbow", "r_hand",
    "l_hip", "l_knee", "l_foot",
    "r_hip", "r_knee", "r_foot",
)
# bone tree over the 15 joints above (0-based)
SBU_BONES = (
    (0, 1), (1, 2),
    (1, 3), (3, 4), (4, 5),
    (1, 6), (6, 7), (7, 8),
    (2, 9), (9, 10), (10, 11),
    (2, 12), (12, 13), (13, 14),
)
SBU_TORSO = 2
TOPOLOGIES = ("tree", "full")


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    coords: np.ndarray  # (T, P, J, 3)
    label: int = 0
    id: str = ""

    def __post_init__(self):
        c = np.array(self.coords, dtype=np.float64)
        if c.ndim != 4 or c.shape[3] != 3 or c.shape[0] < 1:
            _fail("bad-sequence", f"coords must be (T>=1, P, J, 3), got {c.shape}")
        if not np.all(np.isfinite(c)):
            _fail("bad-sequence", f"sequence {self.id!r} has non-finite coordinates")
        object.__setattr__(self, "coords", c)

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def persons(self) -> int:
        return self.coords.shape[1]

    @property
    def joints(self) -> int:
        return self.coords.shape[2]


def parse_sbu(text, persons: int = SBU_PERSONS, joints: int = SBU_JOINTS, label: int = 0, seq_id: str = "") -> SkeletonSequence:
    """Parse ``index,x,y,z,...`` lines (person-major, joint-minor)."""
    if isinstance(text, str):
        text = io.StringIO(text)
    width = 1 + persons * joints * 3
    rows = []
    for lineno, line in enumerate(text, start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if fields and fields[-1] == "":
            fields.pop()
        if len(fields) != width:
            _fail("bad-record", f"{seq_id or '<input>'} line {lineno}: {len(fields)} fields, expected {width}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            _fail("parse-error", f"{seq_id or '<input>'} line {lineno}: non-numeric field")
        rows.append(values)
    if not rows:
        _fail("bad-record", f"{seq_id or '<input>'}: no frames")
    data = np.array(rows)
    order = np.argsort(data[:, 0], kind="stable")
    coords = data[order, 1:].reshape(len(rows), persons, joints, 3)
    return SkeletonSequence(coords, label, seq_id)


def temporal_chunk(trajectory, M: int = 8) -> np.ndarray:
    """Concatenated per-chunk means of a ``(T, 3)`` trajectory.

    Frame ``t`` falls in chunk ``floor(t * M / T)``; an empty chunk (``T < M``)
    repeats the previous chunk's mean.
    """
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] < 1:
        _fail("bad-sequence", f"trajectory must be (T>=1, c), got {traj.shape}")
    if M < 1:
        _fail("bad-chunks", f"M must be >= 1, got {M}")
    T = traj.shape[0]
    idx = (np.arange(T) * M) // T
    sums = np.zeros((M, traj.shape[1]))
    np.add.at(sums, idx, traj)
    counts = np.bincount(idx, minlength=M)
    out = np.empty_like(sums)
    prev = None
    for c in range(M):
        if counts[c]:
            prev = sums[c] / counts[c]
        out[c] = prev
    return out.ravel()


def topology_edges(topology: str, persons: int, joints: int) -> list[tuple[int, int]]:
    n = persons * joints
    if topology == "full":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if topology == "tree":
        if joints != SBU_JOINTS:
            _fail("bad-topology", f"tree topology needs {SBU_JOINTS} joints, got {joints}")
        edges = [(p * joints + i, p * joints + j) for p in range(persons) for i, j in SBU_BONES]
        edges += [(p * joints + SBU_TORSO, (p + 1) * joints + SBU_TORSO) for p in range(persons - 1)]
        return edges
    _fail("bad-topology", f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")


def build_graph(
    seq: SkeletonSequence,
    M: int = 8,
    topology: str = "tree",
    self_loops: bool = True,
    edges: Optional[Sequence[tuple[int, int]]] = None,
) -> LabeledGraph:
    """One node per (person, joint) trajectory, person-major."""
    P, J = seq.persons, seq.joints
    traj = seq.coords.reshape(seq.frames, P * J, 3)
    signals = np.stack([temporal_chunk(traj[:, i], M) for i in range(P * J)])
    if edges is None:
        edges = topology_edges(topology, P, J)
    adj = adjacency_from_edges(P * J, edges, self_loops=self_loops)
    names = tuple(f"p{p}j{j}" for p in range(P) for j in range(J))
    return LabeledGraph(signals, adj, seq.label, names, seq.id)


# ------------------------------------------------------------------ SBU files


def parse_split(text) -> dict[str, list[str]]:
    """``[train]`` / ``[test]`` sections, one sequence id per line."""
    if isinstance(text, str):
        text = io.StringIO(text)
    split: dict[str, list[str]] = {"train": [], "test": []}
    section = None
    for lineno, line in enumerate(text, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in split:
                _fail("bad-split", f"line {lineno}: unknown section {line}")
            continue
        if section is None:
            _fail("bad-split", f"line {lineno}: id outside a [train]/[test] section")
        split[section].append(line)
    return split


def load_sbu(
    root,
    M: int = 8,
    topology: str = "tree",
    self_loops: bool = True,
    pattern: str = "skeleton_pos.txt",
    persons: int = SBU_PERSONS,
    joints: int = SBU_JOINTS,
) -> list[LabeledGraph]:
    """Read every ``pattern`` file below ``root``.

    The layout follows the SBU release, ``<set>/<class>/<take>/<pattern>``:
    the sequence id is the file's directory relative to ``root`` and the
    label is the 1-based class directory number minus one.
    """
    root = Path(root)
    files = sorted(root.rglob(pattern))
    if not files:
        _fail("no-data", f"no {pattern} files under {root}")
    graphs = []
    for f in files:
        rel = f.parent.relative_to(root)
        try:
            label = int(rel.parent.name) - 1
        except ValueError:
            _fail("bad-layout", f"{rel}: class directory {rel.parent.name!r} is not a number")
        with open(f) as fh:
            seq = parse_sbu(fh, persons, joints, label, rel.as_posix())
        graphs.append(build_graph(seq, M, topology, self_loops))
    return graphs


# ------------------------------------------------------------- normalization


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-dimension affine map onto [0, 1] fitted on training signals."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, graphs: Iterable[LabeledGraph]) -> "MinMaxScaler":
        X = np.concatenate([g.signals for g in graphs])
        return cls(X.min(axis=0), X.max(axis=0))

    def transform_signals(self, X) -> np.ndarray:
        span = self.hi - self.lo
        scale = np.where(span > 0, span, 1.0)
        out = (np.asarray(X) - self.lo) / scale
        # constant training dimensions map to 0; unseen test values are clipped
        return np.clip(np.where(span > 0, out, 0.0), 0.0, 1.0)

    def transform(self, g: LabeledGraph) -> LabeledGraph:
        return g.with_signals(self.transform_signals(g.signals))

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d) -> "MinMaxScaler":
        return cls(np.array(d["lo"], dtype=np.float64), np.array(d["hi"], dtype=np.float64))


# ----------------------------------------------------------------- synthetic

_BASE_POSE = np.array([
    [0.0, 1.70, 0.0], [0.0, 1.50, 0.0], [0.0, 1.20, 0.0],
    [-0.20, 1.45, 0.0], [-0.45, 1.30, 0.0], [-0.60, 1.10, 0.0],
    [0.20, 1.45, 0.0], [0.45, 1.30, 0.0], [0.60, 1.10, 0.0],
    [-0.10, 0.95, 0.0], [-0.12, 0.50, 0.0], [-0.12, 0.05, 0.0],
    [0.10, 0.95, 0.0], [0.12, 0.50, 0.0], [0.12, 0.05, 0.0],
])
# how much each joint moves relative to the torso
_MOBILITY = np.array([0.3, 0.2, 0.1, 0.3, 0.7, 1.0, 0.3, 0.7, 1.0, 0.2, 0.5, 0.8, 0.2, 0.5, 0.8])


def _class_pattern(seed: int, c: int):
    rng = Rng(seed, stream=10_000 + c)
    shape = (SBU_PERSONS, SBU_JOINTS, 3)
    amp = 0.6 * rng.uniform(0.2, 1.0, size=shape) * _MOBILITY[None, :, None]
    phase = rng.uniform(0.0, 2.0 * math.pi, size=shape)
    freq = 0.5 + 0.5 * (c % 4) + rng.uniform(0.0, 0.25)
    drift = rng.uniform(-0.5, 0.5, size=(SBU_PERSONS, 1, 3))
    return amp, phase, freq, drift


def synth_sequence(c: int, i: int, seed: int, frames=(20, 40)) -> SkeletonSequence:
    amp, phase, freq, drift = _class_pattern(seed, c)
    rng = Rng(seed, stream=1 + 1000 * c + i)
    T = frames[0] + rng.below(frames[1] - frames[0] + 1)
    tau = (np.arange(T) / T)[:, None, None, None]
    base = np.stack([_BASE_POSE, _BASE_POSE * [-1, 1, 1] + [1.0, 0.0, 0.8]])
    jitter = 1.0 + rng.normal(0.0, 0.1, size=(1, SBU_PERSONS, 1, 1))
    shift = rng.normal(0.0, 0.03, size=(1, SBU_PERSONS, 1, 3))
    motion = jitter * amp * np.sin(2.0 * math.pi * freq * tau + phase) + drift * tau
    noise = rng.normal(0.0, 0.02, size=(T, SBU_PERSONS, SBU_JOINTS, 3))
    coords = base[None] + shift + motion + noise
    return SkeletonSequence(coords, c, f"synth-c{c}-{i:04d}")


def synth_dataset(
    classes: int,
    samples_per_class: int,
    seed: int,
    M: int = 8,
    topology: str = "tree",
    self_loops: bool = True,
) -> list[LabeledGraph]:
    """SBU-shaped sequences with one smooth motion pattern per class.

    Graphs come class by class, ``samples_per_class`` each, deterministic
    in ``seed``.
    """
    if classes < 2:
        _fail("bad-config", f"need at least 2 classes, got {classes}")
    return [
        build_graph(synth_sequence(c, i, seed), M, topology, self_loops)
        for c in range(classes)
        for i in range(samples_per_class)
    ]


def split_per_class(graphs: Sequence[LabeledGraph], n_train: int) -> dict[str, list[str]]:
    """First ``n_train`` graphs of each class go to train, the rest to test."""
    seen: dict[int, int] = {}
    split: dict[str, list[str]] = {"train": [], "test": []}
    for g in graphs:
        k = seen.get(g.label, 0)
        split["train" if k < n_train else "test"].append(g.name)
        seen[g.label] = k + 1
    return split


def synth_split(classes: int, n_train: int, n_test: int, seed: int, **kw):
    graphs = synth_dataset(classes, n_train + n_test, seed, **kw)
    return graphs, split_per_class(graphs, n_train)


def centroid_accuracy(train: Sequence[LabeledGraph], test: Sequence[LabeledGraph]) -> float:
    """Held-out accuracy of a nearest-centroid rule on flattened node signals."""
    X = np.stack([g.signals.ravel() for g in train])
    y = np.array([g.label for g in train])
    labels = np.unique(y)
    centroids = np.stack([X[y == c].mean(axis=0) for c in labels])
    Z = np.stack([g.signals.ravel() for g in test])
    d = ((Z[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    pred = labels[np.argmin(d, axis=1)]
    return float(np.mean(pred == np.array([g.label for g in test])))
