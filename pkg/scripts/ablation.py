#!/usr/bin/env python3
"""Ablation ladder on the toy benchmark.

Runs the full model, the no-retrieval variant (classifier logit only),
and the MLP-instead-of-KAN variant with the same data and seed, then
prints their mean accuracies side by side.
"""

import argparse
import csv
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from spark.cli import main as spark_main
from toy_benchmark import build_workspace

VARIANTS = {
    "full": [],
    "no_retrieval": ["--set", "ablation.disable_retrieval=true"],
    "mlp": ["--set", "ablation.use_mlp_instead_of_kan=true",
            "--set", "ablation.disable_retrieval=true"],
}


def read_macc(path: str) -> float:
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if row and row[0] == "mAcc":
                return float(row[1])
    raise RuntimeError(f"no mAcc row in {path}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/ablation")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-eval", type=int, default=500)
    ap.add_argument("--k", type=int, default=5)
    args = ap.parse_args()

    results = {}
    for name, extra in VARIANTS.items():
        root = os.path.join(args.workdir, name)
        cfg = build_workspace(root, args.seed, args.n_train, args.n_eval)
        out = os.path.join(root, "eval.csv")
        for step in (["train", "--config", cfg] + extra,
                     ["index", "--config", cfg] + extra,
                     ["eval", "--config", cfg, "--k", str(args.k),
                      "--out", out] + extra):
            rc = spark_main(step)
            if rc != 0:
                return rc
        results[name] = read_macc(out)
    print()
    for name, acc in results.items():
        print(f"{name:>14}: mAcc {acc:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
