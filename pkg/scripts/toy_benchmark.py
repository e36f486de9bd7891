#!/usr/bin/env python3
"""Cross-generator toy benchmark.

Trains on the pg/cg profiles, indexes their embeddings, and evaluates
retrieval voting on the held-out ld/gl profiles over a k sweep. Everything
runs through the `spark` CLI so the run is reproducible from the emitted
config file alone.
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from spark.cli import main as spark_main
from spark.datagen import SENSOR_NOISE_SIGMA, synth_manifest_rows, write_manifest

TOY_KEYS = {
    "model.d_model": "64",
    "model.n_heads": "4",
    "model.n_experts": "2",
    "model.blocks_per_path": "1",
    "model.proj_dim": "64",
    "model.image_size": "32",
    "train.lr": "0.002",
    "train.epochs": "3",
}


def _noisy_real_rows(seeds):
    sigma = f"{SENSOR_NOISE_SIGMA:g}"
    return [(f"real:{s}:{sigma}", f"SYNTH:real:{s}:{sigma}", 0, "real")
            for s in seeds]


def _jittered_fake_rows(seed, n_band, n_decoy):
    """Extra store entries: train-generator fakes over a band of strengths,
    plus a few weak decoys near the real/fake boundary."""
    rng = np.random.default_rng(99 + seed)
    rows = []
    for offset, n, lo, hi in ((5_000_000, n_band, 0.30, 0.65),
                              (7_000_000, n_decoy, 0.10, 0.22)):
        base = seed * 1_000_000 + offset
        for i in range(n):
            name = "pg" if i % 2 == 0 else "cg"
            strength = f"{rng.uniform(lo, hi):.4f}"
            rows.append((f"{name}:{base + i}:{strength}",
                         f"SYNTH:{name}:{base + i}:{strength}", 1, name))
    return rows


def build_workspace(root: str, seed: int, n_train: int, n_eval: int) -> str:
    os.makedirs(root, exist_ok=True)
    base = seed * 1_000_000
    half = n_train // 4
    train = synth_manifest_rows("real", range(base, base + 2 * half), 32)
    train += synth_manifest_rows("pg", range(base, base + half), 32)
    train += synth_manifest_rows("cg", range(base + half, base + 2 * half), 32)
    write_manifest(os.path.join(root, "train.tsv"), train)

    # store: clean + sensor-noise reals, train fakes, strength-jittered extras
    idx = synth_manifest_rows("real", range(base, base + half * 3 // 5), 32)
    idx += _noisy_real_rows(range(base + half * 3 // 5, base + half * 6 // 5))
    idx += synth_manifest_rows("pg", range(base, base + half), 32)
    idx += synth_manifest_rows("cg", range(base + half, base + 2 * half), 32)
    idx += _jittered_fake_rows(seed, 18 * half // 5, 2 * half // 5)
    write_manifest(os.path.join(root, "index.tsv"), idx)

    ebase = 777_000_000 + base
    q = n_eval // 5
    ev = _noisy_real_rows(range(ebase, ebase + 3 * q))
    ev += synth_manifest_rows("ld", range(ebase, ebase + q), 32)
    ev += synth_manifest_rows("gl", range(ebase + 100_000, ebase + 100_000 + q), 32)
    write_manifest(os.path.join(root, "eval.tsv"), ev)

    kv = dict(TOY_KEYS)
    kv["seed"] = str(seed)
    kv["data.train_manifest"] = os.path.join(root, "train.tsv")
    kv["data.index_manifest"] = os.path.join(root, "index.tsv")
    kv["data.eval_manifests"] = os.path.join(root, "eval.tsv")
    kv["store.path"] = os.path.join(root, "store.spkv")
    kv["checkpoint.path"] = os.path.join(root, "model.spkm")
    kv["out.dir"] = root
    cfg = os.path.join(root, "run.cfg")
    with open(cfg, "w", encoding="utf-8") as f:
        f.writelines(f"{k} = {v}\n" for k, v in kv.items())
    return cfg


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/toy")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-eval", type=int, default=500)
    ap.add_argument("--k-list", default="1,3,5,10,15,20")
    args = ap.parse_args()

    cfg = build_workspace(args.workdir, args.seed, args.n_train, args.n_eval)
    for step in (["train", "--config", cfg],
                 ["index", "--config", cfg],
                 ["eval", "--config", cfg, "--k-list", args.k_list]):
        rc = spark_main(step)
        if rc != 0:
            return rc
    print(f"artifacts in {args.workdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
