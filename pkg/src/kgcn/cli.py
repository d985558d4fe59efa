"""Command-line entry point.

    kgcn <command> [--config FILE] [--out DIR] [--checkpoint FILE] [--key value ...]

``--key value`` pairs set dotted config paths (``--train.lr0 0.05``,
``--seed 3``). Each run writes into its output directory, by default
``$KGCN_OUT/<command>`` (``KGCN_OUT`` defaults to ``runs``): the resolved
``config.json``, a ``report.txt``, and where relevant ``checkpoint.json`` and
``metrics.csv``.

Exit status: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure (divergence or a failed self-check).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checks
from .config import RunConfig, apply_overrides, load_config, parse_value
from .errors import KgcnError, raiser
from .kernels import KernelSpec, canonical_kind
from .kpca import kpca_fit
from .model import param_count
from .numcore import Rng
from .skeleton import MinMaxScaler, load_sbu, parse_split, synth_split
from .train import (
    Checkpoint,
    atomic_write_text,
    evaluate,
    fit,
    init_model,
    load_checkpoint,
    load_dataset,
    num_classes,
    save_checkpoint,
    save_dataset,
    split_graphs,
    write_metrics_csv,
)

_fail = raiser("cli")

COMMANDS = ("train", "eval", "ablate", "kernelcheck", "gradcheck", "kpca", "synth", "sweep")
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
_NUMERIC_CODES = {
    "diverged",
    "check-failed",
    "activation-overflow",
    "log-domain-violation",
    "non-finite",
    "non-finite-objective",
}


class UsageError(Exception):
    pass


def exit_code(err: KgcnError) -> int:
    if err.module in ("config", "cli") and err.code != "check-failed":
        return EXIT_USAGE
    if err.code in _NUMERIC_CODES:
        return EXIT_NUMERIC
    return EXIT_DATA


# ------------------------------------------------------------------ parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kgcn",
        description="Kernel graph convolutional networks for skeleton action recognition.",
        epilog="Any other --dotted.key VALUE pair overrides the config (e.g. --seed 1 --train.epochs 50).",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (default $KGCN_OUT/<command>)")
    p.add_argument("--checkpoint", help="checkpoint to evaluate (eval) or resume from (train)")
    return p


def parse_overrides(extra: Sequence[str]) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"--{key} needs a value")
            text = extra[i + 1]
            i += 2
        out[key] = parse_value(text)
    return out


def output_dir(command: str, out: Optional[str]) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get("KGCN_OUT", "runs")) / command


# --------------------------------------------------------------------- data


def load_data(cfg: RunConfig):
    """``(graphs, split, scaler)``; the scaler is fitted on the training split."""
    d = cfg.data
    if d.source == "synth":
        seed = d.seed if d.seed is not None else cfg.seed
        graphs, split = synth_split(
            d.classes, d.train_per_class, d.test_per_class, seed,
            M=d.M, topology=d.topology, self_loops=cfg.graph.self_loops,
        )
    elif d.source == "sbu":
        if not d.path or not d.split:
            _fail("missing-data", "data.source=sbu needs data.path and data.split")
        graphs = load_sbu(d.path, d.M, d.topology, cfg.graph.self_loops)
        with open(d.split) as fh:
            split = parse_split(fh)
    elif d.source == "file":
        if not d.path:
            _fail("missing-data", "data.source=file needs data.path")
        graphs, split = load_dataset(d.path)
    else:
        _fail("bad-config", f"data.source must be synth, sbu or file, got {d.source!r}")
    scaler = None
    if d.normalize:
        train_set, _ = split_graphs(graphs, split)
        scaler = MinMaxScaler.fit(train_set)
        graphs = [scaler.transform(g) for g in graphs]
    return graphs, split, scaler


def _resolved_model_cfg(cfg: RunConfig):
    return dataclasses.replace(cfg.model, r=cfg.hops)


def _confusion_text(conf: np.ndarray) -> str:
    width = max(3, len(str(int(conf.max()))) if conf.size else 1)
    head = " " * 6 + " ".join(f"{j:>{width}d}" for j in range(conf.shape[1]))
    rows = [f"{i:>4d}  " + " ".join(f"{int(v):>{width}d}" for v in row) for i, row in enumerate(conf)]
    return "\n".join(["true\\pred", head] + rows)


class Run:
    """Output directory plumbing for one command."""

    def __init__(self, out: Path, cfg: RunConfig):
        self.out = out
        self.cfg = cfg
        self.lines: list[str] = []
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    def say(self, line: str = ""):
        print(line)
        self.lines.append(line)

    def finish(self):
        atomic_write_text(self.out / "report.txt", "\n".join(self.lines) + "\n")

    def write_csv(self, header, rows, name="metrics.csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        atomic_write_text(self.out / name, buf.getvalue())


# ----------------------------------------------------------------- commands


def cmd_train(run: Run, resume: Optional[Checkpoint]):
    cfg = run.cfg
    graphs, split, scaler = load_data(cfg)
    train_set, test_set = split_graphs(graphs, split)
    tcfg = cfg.train_config()
    spec = cfg.kernel.to_spec()
    model_cfg = _resolved_model_cfg(cfg)
    if resume is not None:
        state = fit(graphs, split, tcfg, resume=resume.to_state())
    else:
        model = init_model(train_set, tcfg, spec, model_cfg, num_classes(graphs), cfg.kpca)
        state = fit(graphs, split, tcfg, model=model)
    ck = Checkpoint.from_state(state, cfg.to_dict())
    if scaler is not None:
        ck.extra["scaler"] = scaler.to_dict()
    save_checkpoint(ck, run.out / "checkpoint.json")
    write_metrics_csv(state.history, run.out / "metrics.csv")
    m = state.model
    run.say(f"model {m.kind}  kernel {spec.kind}  K={m.K}  params={param_count(m)}")
    run.say(f"epochs {state.epoch}")
    if state.history["loss"]:
        run.say(f"final loss {state.history['loss'][-1]:.6f}  lr {state.nu:.6g}")
    run.say(f"train macro accuracy {evaluate(m, train_set).accuracy:.4f}")
    if test_set:
        res = evaluate(m, test_set)
        run.say(f"test macro accuracy {res.accuracy:.4f}  micro {res.micro:.4f}")
        run.say(_confusion_text(res.confusion))


def cmd_eval(run: Run, ck: Checkpoint):
    if ck.model is None:
        _fail("bad-checkpoint", "checkpoint holds no model")
    graphs, split, _ = load_data(_without_normalize(run.cfg))
    if "scaler" in ck.extra:
        scaler = MinMaxScaler.from_dict(ck.extra["scaler"])
        graphs = [scaler.transform(g) for g in graphs]
    train_set, test_set = split_graphs(graphs, split)
    target, which = (test_set, "test") if test_set else (train_set, "train")
    res = evaluate(ck.model, target)
    run.say(f"{which} macro accuracy {res.accuracy:.4f}  micro {res.micro:.4f}")
    run.say("per-class recall " + " ".join(f"{r:.4f}" for r in res.per_class))
    run.say(_confusion_text(res.confusion))


def _without_normalize(cfg: RunConfig) -> RunConfig:
    return dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, normalize=False))


def cmd_ablate(run: Run):
    cfg = run.cfg
    graphs, split, _ = load_data(cfg)
    train_set, test_set = split_graphs(graphs, split)
    target = test_set or train_set
    spec = cfg.kernel.to_spec()
    model_cfg = _resolved_model_cfg(cfg)
    if model_cfg.kind != "kgcn":
        _fail("bad-config", "ablation needs model.kind=kgcn")
    rows = []
    run.say(f"kernel {spec.kind}  K={model_cfg.K}  N={model_cfg.N}")
    run.say(f"{'mode':<8} {'accuracy':>8}")
    for mode in ("FSV_LA", "LSV_FA", "LSV_LA"):
        tcfg = dataclasses.replace(cfg.train_config(), ablation=mode)
        model = init_model(train_set, tcfg, spec, model_cfg, num_classes(graphs))
        state = fit(graphs, split, tcfg, model=model)
        acc = evaluate(state.model, target).accuracy
        rows.append([mode, repr(acc)])
        run.say(f"{mode:<8} {acc:>8.4f}")
    run.write_csv(["mode", "accuracy"], rows)


def cmd_sweep(run: Run):
    cfg = run.cfg
    graphs, split, _ = load_data(cfg)
    train_set, test_set = split_graphs(graphs, split)
    C = num_classes(graphs)
    tcfg = cfg.train_config()
    rows = []
    run.say(f"{'kernel':<11} {'K':>3} {'N':>3} {'params':>7} {'train':>7} {'test':>7}  status")
    for kind in cfg.sweep.kernels:
        # configured hyperparameters apply to the configured kernel, defaults elsewhere
        same = canonical_kind(kind) == canonical_kind(cfg.kernel.kind)
        spec = cfg.kernel.to_spec() if same else KernelSpec(kind)
        for K in cfg.sweep.K:
            for N in cfg.sweep.N:
                model_cfg = dataclasses.replace(_resolved_model_cfg(cfg), kind="kgcn", K=K, N=N)
                D = train_set[0].dim
                params = (D + 1) * N * K + C * K
                try:
                    model = init_model(train_set, tcfg, spec, model_cfg, C)
                    state = fit(graphs, split, tcfg, model=model)
                    tr = evaluate(state.model, train_set).accuracy
                    te = evaluate(state.model, test_set).accuracy if test_set else None
                    status = "ok"
                except KgcnError as err:
                    tr = te = None
                    status = err.qualified
                rows.append([spec.kind, K, N, params, _num(tr), _num(te), status])
                run.say(f"{spec.kind:<11} {K:>3} {N:>3} {params:>7} {_fmt(tr):>7} {_fmt(te):>7}  {status}")
    run.write_csv(["kernel", "K", "N", "params", "train_acc", "test_acc", "status"], rows)


def _num(x):
    return "" if x is None else repr(x)


def _fmt(x):
    return "-" if x is None else f"{x:.4f}"


def cmd_kernelcheck(run: Run):
    rep = checks.neural_consistency(seed=run.cfg.seed)
    rows = []
    run.say(f"neural vs closed form, {rep.pairs} pairs, D={rep.dim}")
    for kind, err in rep.exact.items():
        run.say(f"{kind:<11} max abs error {err:.3e}")
        rows.append([kind, "", repr(err)])
    for beta, err in rep.hi.items():
        run.say(f"{'hi':<11} beta={beta:<5g} max abs error {err:.3e}")
        rows.append(["hi", repr(beta), repr(err)])
    run.say(f"hi bound {rep.hi_bound:.3g} at beta=50; error non-increasing in beta: {rep.hi_monotone}")
    run.write_csv(["kernel", "beta", "max_abs_error"], rows)
    run.say("PASS" if rep.ok else "FAIL")
    if not rep.ok:
        run.finish()
        _fail("check-failed", "neural consistency outside tolerance")


def cmd_gradcheck(run: Run):
    seed = run.cfg.seed
    rep = checks.gradcheck(seeds=range(seed, seed + 5))
    rows = []
    for kind, err in rep.worst.items():
        run.say(f"{kind:<11} worst relative error {err:.3e}")
        rows.append([kind, repr(err)])
    run.say(f"worst relative error {rep.overall:.3e} (tolerance {checks.GRAD_TOL:g})")
    run.write_csv(["kernel", "worst_rel_error"], rows)
    run.say("PASS" if rep.ok else "FAIL")
    if not rep.ok:
        run.finish()
        _fail("check-failed", "gradient check outside tolerance")


def cmd_kpca(run: Run):
    cfg = run.cfg
    graphs, split, scaler = load_data(cfg)
    train_set, _ = split_graphs(graphs, split)
    nodes = np.concatenate([g.signals for g in train_set])
    spec = cfg.kernel.to_spec()
    proj = kpca_fit(spec, nodes, cfg.kpca.H, cfg.kpca.max_anchors, Rng(cfg.seed, stream=0))
    extra = {"projector": proj.to_dict()}
    if scaler is not None:
        extra["scaler"] = scaler.to_dict()
    save_checkpoint(Checkpoint(cfg.to_dict(), None, {}, {}, 0, {}, extra=extra), run.out / "checkpoint.json")
    run.write_csv(["component", "eigenvalue"], [[i + 1, repr(float(w))] for i, w in enumerate(proj.eigvals)])
    run.say(f"kernel {spec.kind}  anchors {proj.anchors.shape[0]}  D={proj.dim}  H={proj.H}")
    run.say("eigenvalues " + " ".join(f"{w:.6g}" for w in proj.eigvals))


def cmd_synth(run: Run):
    cfg = run.cfg
    graphs, split, _ = load_data(_without_normalize(cfg))
    save_dataset(run.out / "checkpoint.json", graphs, split, cfg.to_dict())
    run.say(f"{len(graphs)} graphs  {num_classes(graphs)} classes  train {len(split['train'])}  test {len(split['test'])}")
    run.say(f"nodes {graphs[0].n}  signal dim {graphs[0].dim}")


# --------------------------------------------------------------------- main


def _load_run_config(args, overrides, base: Optional[dict]) -> RunConfig:
    if base is not None and args.config is None:
        return RunConfig.from_dict(apply_overrides(base, overrides))
    return load_config(args.config, overrides)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args, extra = parser.parse_known_args(argv)
        except SystemExit as exc:
            return EXIT_OK if exc.code == 0 else EXIT_USAGE
        overrides = parse_overrides(extra)
        ck = None
        if args.checkpoint:
            ck = load_checkpoint(args.checkpoint)
        elif args.command == "eval":
            raise UsageError("eval needs --checkpoint")
        cfg = _load_run_config(args, overrides, ck.config if ck is not None else None)
        out = output_dir(args.command, args.out)
        r = Run(out, cfg)
        if args.command == "train":
            cmd_train(r, ck)
        elif args.command == "eval":
            cmd_eval(r, ck)
        else:
            globals()[f"cmd_{args.command}"](r)
        r.finish()
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kgcn: error: cli/usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KgcnError as err:
        code = exit_code(err)
        if code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        print(f"kgcn: error: {err.qualified}: {err.message}", file=sys.stderr)
        return code
    except FileNotFoundError as exc:
        print(f"kgcn: error: cli/missing-file: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
