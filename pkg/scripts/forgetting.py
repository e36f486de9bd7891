#!/usr/bin/env python3
"""Two-phase incremental run: phase 0 on pg, phase 1 on cg.

Compares default replay/distillation/anchoring against the ablated run
(all lambdas 0, no replay) and prints the phase-0 accuracy drop after
phase 1 for both.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from spark.cli import main as spark_main
from spark.datagen import synth_manifest_rows, write_manifest
from toy_benchmark import TOY_KEYS


def build_workspace(root: str, seed: int, n_phase: int, n_eval: int) -> str:
    os.makedirs(root, exist_ok=True)
    base = seed * 100_000
    half = n_phase // 2
    p0 = synth_manifest_rows("real", range(base, base + half), 32)
    p0 += synth_manifest_rows("pg", range(base, base + half), 32)
    p1 = synth_manifest_rows("real", range(base + half, base + 2 * half), 32)
    p1 += synth_manifest_rows("cg", range(base + half, base + half + half), 32)
    write_manifest(os.path.join(root, "phase0.tsv"), p0)
    write_manifest(os.path.join(root, "phase1.tsv"), p1)
    ebase = 888_000_000 + base
    q = n_eval // 2
    e0 = synth_manifest_rows("real", range(ebase, ebase + q), 32)
    e0 += synth_manifest_rows("pg", range(ebase, ebase + q), 32)
    e1 = synth_manifest_rows("real", range(ebase + q, ebase + 2 * q), 32)
    e1 += synth_manifest_rows("cg", range(ebase + q, ebase + 2 * q), 32)
    write_manifest(os.path.join(root, "eval0.tsv"), e0)
    write_manifest(os.path.join(root, "eval1.tsv"), e1)

    kv = dict(TOY_KEYS)
    kv["seed"] = str(seed)
    kv["data.phase_manifests"] = ",".join(
        os.path.join(root, f"phase{i}.tsv") for i in (0, 1))
    kv["data.eval_manifests"] = ",".join(
        os.path.join(root, f"eval{i}.tsv") for i in (0, 1))
    kv["store.path"] = os.path.join(root, "store.spkv")
    kv["checkpoint.path"] = os.path.join(root, "model.spkm")
    kv["out.dir"] = root
    cfg = os.path.join(root, "run.cfg")
    with open(cfg, "w", encoding="utf-8") as f:
        f.writelines(f"{k} = {v}\n" for k, v in kv.items())
    return cfg


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/forgetting")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-phase", type=int, default=400)
    ap.add_argument("--n-eval", type=int, default=200)
    args = ap.parse_args()

    for variant, extra in (
            ("defaults", []),
            ("ablated", ["--set", "continual.lambda_emb=0",
                         "--set", "continual.lambda_logit=0",
                         "--set", "continual.lambda_reg=0",
                         "--set", "continual.replay_fraction=0"])):
        root = os.path.join(args.workdir, variant)
        cfg = build_workspace(root, args.seed, args.n_phase, args.n_eval)
        print(f"--- {variant} ---")
        rc = spark_main(["incr", "--config", cfg,
                         "--out", os.path.join(root, "phases.csv")] + extra)
        if rc != 0:
            return rc
        print(open(os.path.join(root, "phases.csv")).read())
    return 0


if __name__ == "__main__":
    sys.exit(main())
