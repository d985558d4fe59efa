#!/usr/bin/env python3
"""Kernel x K x N sweep on synthetic data (thin wrapper over ``kgcn sweep``).

    python3 scripts/filter_study.py --seed 0 --out runs/filters --train.epochs 100

Extra ``--dotted.key value`` pairs are passed through as config overrides.
The resulting ``metrics.csv`` has one row per (kernel, K, N).
"""
import sys

from kgcn.cli import run

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--seed" not in argv and not any(a.startswith("--seed=") for a in argv):
        argv += ["--seed", "0"]
    sys.exit(run(["sweep", *argv]))
