"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 IO/corruption, 3 numeric
failure. Every command is a pure function of (config, seed, input files).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import (RunConfig, apply_overrides, build_run_config,
                     read_config_file, render_config)
from .continual import ContinualTrainer, train_loop
from .datagen import ingest_image, load_manifest, parse_synth_source
from .errors import (ConfigError, CorruptStoreError, EmptyStoreError,
                     IngestionError, InvalidInputError, NotFoundError,
                     NumericError, SparkError)
from .model import SparkModel, parameter_count, restore_store, save_checkpoint
from .reports import MetricsReport, write_metrics_csv, write_phase_csv
from .retrieval import VectorStore, normalize_embedding
from .spectral import write_embedding_file


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spark", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("train", "index", "infer", "eval", "incr", "stats", "dump-embeddings"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="path to key-value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--k", type=int, help="neighbors for retrieval voting")
        sp.add_argument("--k-list", help="comma-separated k sweep for eval")
        sp.add_argument("--seed", type=int, help="override config seed")
        sp.add_argument("--store", help="override store.path")
        sp.add_argument("--checkpoint", help="override checkpoint.path")
        sp.add_argument("--out", help="output file (reports/dumps)")
        if name == "infer":
            sp.add_argument("input", help="image path or SYNTH:profile:seed")
    return p


def _effective_config(args) -> tuple[RunConfig, dict[str, str]]:
    kv = read_config_file(args.config) if args.config else {}
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.store is not None:
        overrides.append(f"store.path={args.store}")
    if args.checkpoint is not None:
        overrides.append(f"checkpoint.path={args.checkpoint}")
    kv = apply_overrides(kv, overrides)
    return build_run_config(kv), kv


def _require_manifest(path: str, what: str):
    if not path:
        raise ConfigError(f"no {what} manifest configured")
    if not os.path.exists(path):
        raise NotFoundError(f"{what} manifest not found: {path}")


def _load_samples(cfg: RunConfig, path: str, what: str):
    _require_manifest(path, what)
    return load_manifest(path, cfg.model.image_size, cfg.model.channels)


def _embed_all(model: SparkModel, store, samples):
    for s in samples:
        emb, logit = model.embed_and_logit(store, s)
        yield s, emb, logit


def _classifier_accuracy(rows) -> dict[str, float]:
    hits: dict[str, list[int]] = {}
    for s, _, logit in rows:
        pred = 1 if logit > 0 else 0
        hits.setdefault(s.generator_id, []).append(int(pred == s.label))
    return {g: float(np.mean(v)) for g, v in hits.items()}


def _out_path(args, cfg: RunConfig, default_name: str) -> str:
    if args.out:
        return args.out
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, default_name)


def cmd_train(args, cfg: RunConfig, kv: dict) -> int:
    samples = _load_samples(cfg, cfg.train_manifest, "training")
    model = SparkModel(cfg.model, cfg.flags)
    store = model.init_store(cfg.seed)
    log: list = []
    train_loop(model, store, samples, cfg.train, seed=cfg.seed, log=log)
    save_checkpoint(cfg.checkpoint_path, store, render_config(kv))
    report = MetricsReport(
        per_generator=_classifier_accuracy(_embed_all(model, store, samples)),
        loss_curve=[e["loss"] for e in log],
        parameter_count=parameter_count(cfg.model, cfg.flags)["total"])
    write_metrics_csv(report, _out_path(args, cfg, "train_report.csv"))
    first = log[0]["loss"] if log else float("nan")
    last = log[-1]["loss"] if log else float("nan")
    print(f"trained {len(samples)} samples, {len(log)} steps, "
          f"loss {first:.4f} -> {last:.4f}")
    print(f"checkpoint: {cfg.checkpoint_path}  train mAcc (classifier): {report.macc:.4f}")
    return 0


def cmd_index(args, cfg: RunConfig, kv: dict) -> int:
    manifest = cfg.index_manifest or cfg.train_manifest
    samples = _load_samples(cfg, manifest, "index")
    model = SparkModel(cfg.model, cfg.flags)
    store = restore_store(model, cfg.checkpoint_path, cfg.seed)
    if os.path.exists(cfg.store_path):
        vstore = VectorStore.load(cfg.store_path)
        if vstore.dim != cfg.model.d_model:
            raise InvalidInputError(
                f"store dim {vstore.dim} != model d_model {cfg.model.d_model}")
    else:
        vstore = VectorStore(cfg.model.d_model)
    for s, emb, _ in _embed_all(model, store, samples):
        vstore.insert(emb, s.label, s.generator_id)
    vstore.save(cfg.store_path)
    print(f"indexed {len(samples)} embeddings; store count {vstore.count} "
          f"-> {cfg.store_path}")
    return 0


def _resolve_input(spec: str, cfg: RunConfig):
    if spec.startswith("SYNTH:"):
        return parse_synth_source(spec, cfg.model.image_size, cfg.model.channels)
    return ingest_image(spec, cfg.model.image_size, cfg.model.channels)


def cmd_infer(args, cfg: RunConfig, kv: dict) -> int:
    sample = _resolve_input(args.input, cfg)
    model = SparkModel(cfg.model, cfg.flags)
    store = restore_store(model, cfg.checkpoint_path, cfg.seed)
    emb, logit = model.embed_and_logit(store, sample)
    if cfg.flags.disable_retrieval:
        pred = 1 if logit > 0 else 0
        print(f"prediction: {'fake' if pred else 'real'} (classifier logit {logit:+.4f})")
        return 0
    vstore = VectorStore.load(cfg.store_path)
    k = args.k if args.k is not None else cfg.model.k_retrieve
    pred, neighbors = vstore.predict(emb, k)
    fakes = sum(n.label for n in neighbors)
    print(f"prediction: {'fake' if pred else 'real'} "
          f"(votes: {len(neighbors) - fakes} real / {fakes} fake, k={k})")
    for n in neighbors:
        print(f"  id={n.id} sim={n.similarity:.6f} "
              f"label={'fake' if n.label else 'real'} generator={n.generator_id}")
    return 0


def _k_list(args, cfg: RunConfig) -> list[int]:
    if args.k_list:
        try:
            ks = [int(x) for x in args.k_list.split(",") if x.strip()]
        except ValueError as e:
            raise ConfigError(f"--k-list: {e}") from e
    elif args.k is not None:
        ks = [args.k]
    else:
        ks = [cfg.model.k_retrieve]
    if not ks or min(ks) < 1:
        raise ConfigError("k values must be >= 1")
    return ks


def evaluate_manifests(model, store, vstore, sample_sets, ks,
                       disable_retrieval: bool) -> MetricsReport:
    """Per-generator accuracy for every k; embeddings computed once."""
    report = MetricsReport(parameter_count=0)
    rows = [(s, *model.embed_and_logit(store, s))
            for samples in sample_sets for s in samples]
    for k in ks:
        hits: dict[str, list[int]] = {}
        for s, emb, logit in rows:
            if disable_retrieval:
                pred = 1 if logit > 0 else 0
            else:
                pred, _ = vstore.predict(emb, k)
            hits.setdefault(s.generator_id, []).append(int(pred == s.label))
        report.per_k[k] = {g: float(np.mean(v)) for g, v in hits.items()}
    report.per_generator = dict(report.per_k[ks[0]])
    return report


def cmd_eval(args, cfg: RunConfig, kv: dict) -> int:
    if not cfg.eval_manifests:
        raise ConfigError("data.eval_manifests is empty; nothing to evaluate")
    sets = [_load_samples(cfg, m, "eval") for m in cfg.eval_manifests]
    model = SparkModel(cfg.model, cfg.flags)
    store = restore_store(model, cfg.checkpoint_path, cfg.seed)
    vstore = None
    if not cfg.flags.disable_retrieval:
        vstore = VectorStore.load(cfg.store_path)
    ks = _k_list(args, cfg)
    report = evaluate_manifests(model, store, vstore, sets, ks,
                                cfg.flags.disable_retrieval)
    report.parameter_count = parameter_count(cfg.model, cfg.flags)["total"]
    out = _out_path(args, cfg, "eval_report.csv")
    write_metrics_csv(report, out)
    for k in ks:
        print(f"k={k}: mAcc {report.macc_at(k):.4f}")
    print(f"report: {out}")
    return 0


def cmd_incr(args, cfg: RunConfig, kv: dict) -> int:
    if not cfg.phase_manifests:
        raise ConfigError("data.phase_manifests is empty; nothing to run")
    phases = [_load_samples(cfg, m, f"phase {i}")
              for i, m in enumerate(cfg.phase_manifests)]
    eval_sets = {os.path.basename(m): _load_samples(cfg, m, "eval")
                 for m in cfg.eval_manifests}
    model = SparkModel(cfg.model, cfg.flags)
    if os.path.exists(cfg.checkpoint_path):
        store = restore_store(model, cfg.checkpoint_path, cfg.seed)
    else:
        store = model.init_store(cfg.seed)
    vstore = VectorStore(cfg.model.d_model)
    k = args.k if args.k is not None else cfg.model.k_retrieve
    trainer = ContinualTrainer(model, store, vstore, cfg.train, cfg.continual,
                               k_retrieve=k, seed=cfg.seed)
    reports = [trainer.run_phase(i, data, eval_sets)
               for i, data in enumerate(phases)]
    # eval set i is treated as introduced at phase i when counts line up
    if len(cfg.eval_manifests) == len(cfg.phase_manifests):
        intro = {os.path.basename(m): i for i, m in enumerate(cfg.eval_manifests)}
    else:
        intro = {name: 0 for name in eval_sets}
    save_checkpoint(cfg.checkpoint_path, store, render_config(kv))
    vstore.save(cfg.store_path)
    if reports and eval_sets:
        out = _out_path(args, cfg, "phase_report.csv")
        write_phase_csv(reports, intro, out)
        print(f"forgetting matrix: {out}")
    for r in reports:
        acc = f"mAcc {r.mean_accuracy:.4f}" if r.accuracy else "no eval sets"
        print(f"phase {r.phase}: store count {r.store_count}, {acc}")
    return 0


def cmd_stats(args, cfg: RunConfig, kv: dict) -> int:
    counts = parameter_count(cfg.model, cfg.flags)
    width = max(len(name) for name in counts)
    for name, n in counts.items():
        if name != "total":
            print(f"{name:<{width}}  {n:>12,}")
    print(f"{'total':<{width}}  {counts['total']:>12,}")
    return 0


def cmd_dump_embeddings(args, cfg: RunConfig, kv: dict) -> int:
    manifest = cfg.index_manifest or cfg.train_manifest
    samples = _load_samples(cfg, manifest, "dump")
    model = SparkModel(cfg.model, cfg.flags)
    store = restore_store(model, cfg.checkpoint_path, cfg.seed)
    records = [(s.sample_id, normalize_embedding(emb))
               for s, emb, _ in _embed_all(model, store, samples)]
    out = _out_path(args, cfg, "embeddings.spke")
    write_embedding_file(out, cfg.model.d_model, records)
    with open(out + ".tsv", "w", encoding="utf-8") as f:
        for s in samples:
            f.write(f"{s.sample_id}\t{s.label}\t{s.generator_id}\n")
    print(f"dumped {len(records)} embeddings -> {out} (+ {out}.tsv)")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "index": cmd_index,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "incr": cmd_incr,
    "stats": cmd_stats,
    "dump-embeddings": cmd_dump_embeddings,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        cfg, kv = _effective_config(args)
        return _COMMANDS[args.command](args, cfg, kv)
    except (ConfigError, InvalidInputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (NotFoundError, EmptyStoreError, CorruptStoreError, IngestionError,
            OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2
    except SparkError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
