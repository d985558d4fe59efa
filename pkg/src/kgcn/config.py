"""Run configuration: nested dataclasses, JSON files and dotted overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import raiser
from .kernels import KINDS, KernelSpec

_fail = raiser("config")


@dataclass
class KernelConfig:
    kind: str = "gaussian"
    beta: Optional[float] = None
    p: Optional[int] = None
    a: Optional[float] = None
    b: Optional[float] = None
    sigma2: Optional[float] = None

    def to_spec(self, **override) -> KernelSpec:
        d = dataclasses.asdict(self)
        d.update(override)
        return KernelSpec.from_dict(d)


@dataclass
class GraphConfig:
    self_loops: bool = True
    hops: int = 1


@dataclass
class DataConfig:
    source: str = "synth"  # synth | sbu | file
    path: Optional[str] = None
    split: Optional[str] = None
    classes: int = 4
    train_per_class: int = 50
    test_per_class: int = 25
    M: int = 8
    topology: str = "tree"
    normalize: bool = True
    seed: Optional[int] = None  # synthetic data seed; defaults to the run seed


@dataclass
class ModelConfig:
    kind: str = "kgcn"  # kgcn | sgcn
    K: int = 5
    N: int = 4
    r: Optional[int] = None  # falls back to graph.hops
    pool: str = "mean"
    init: str = "scaled"  # scaled | plain


@dataclass
class KpcaConfig:
    H: int = 10
    max_anchors: int = 2000


@dataclass
class TrainConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    batch: int = 50
    epochs: int = 3000
    seed: int = 0
    ablation: str = "LSV_LA"
    lr_bounds: Optional[list] = None  # default [lr0/100, lr0*100]

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            _fail("bad-config", f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch < 1:
            _fail("bad-config", f"batch must be >= 1, got {self.batch}")
        if self.epochs < 0:
            _fail("bad-config", f"epochs must be >= 0, got {self.epochs}")
        lo, hi = self.bounds
        if not 0 < lo <= self.lr0 <= hi:
            _fail("bad-config", f"lr0={self.lr0} outside bounds [{lo}, {hi}]")

    @property
    def bounds(self) -> tuple[float, float]:
        if self.lr_bounds is None:
            return self.lr0 / 100.0, self.lr0 * 100.0
        lo, hi = self.lr_bounds
        return float(lo), float(hi)


@dataclass
class SweepConfig:
    kernels: list = field(default_factory=lambda: list(KINDS))
    K: list = field(default_factory=lambda: [1, 5, 10])
    N: list = field(default_factory=lambda: [1, 4, 8])


@dataclass
class RunConfig:
    seed: int
    kernel: KernelConfig = field(default_factory=KernelConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    kpca: KpcaConfig = field(default_factory=KpcaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def hops(self) -> int:
        return self.model.r if self.model.r is not None else self.graph.hops

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "seed" not in d or d["seed"] is None:
            _fail("missing-seed", "config must set 'seed'")
        return _build(cls, d, "")


def _build(cls, d, prefix):
    if not isinstance(d, dict):
        _fail("bad-config", f"{prefix or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(fields))
    if unknown:
        _fail("unknown-key", ", ".join(prefix + k for k in unknown))
    kw = {}
    for name, value in d.items():
        sub = _SECTIONS.get(name) if cls is RunConfig else None
        kw[name] = _build(sub, value, prefix + name + ".") if sub else value
    try:
        return cls(**kw)
    except TypeError as exc:
        _fail("bad-config", f"{prefix or 'config'}: {exc}")


_SECTIONS = {
    "kernel": KernelConfig,
    "graph": GraphConfig,
    "data": DataConfig,
    "model": ModelConfig,
    "kpca": KpcaConfig,
    "train": TrainConfig,
    "sweep": SweepConfig,
}


def parse_value(text: str) -> Any:
    """JSON literal when it parses, plain string otherwise."""
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_overrides(d: dict, overrides: dict[str, Any]) -> dict:
    """Set dotted keys (``train.lr0``) in a nested dict copy."""
    out = json.loads(json.dumps(d))
    for key, value in overrides.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                _fail("bad-config", f"{key}: {p} is not a section")
        node[parts[-1]] = value
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    d: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError:
            _fail("missing-config", f"config file {path} not found")
        except json.JSONDecodeError as exc:
            _fail("bad-config", f"{path}: {exc}")
    return RunConfig.from_dict(apply_overrides(d, overrides or {}))
