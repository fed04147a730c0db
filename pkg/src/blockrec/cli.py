"""Command line entry point: ``blockrec <subcommand> ...``.

Every subcommand returns 0 when everything it ran succeeded and its checks
passed, 1 when a check failed, and 2 on a usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from blockrec import autodiff as ad
from blockrec import baseline
from blockrec import decoder as dec
from blockrec import encoder as enc
from blockrec import trainer
from blockrec.autodiff.store import read_checkpoint_metadata
from blockrec.data import GeneratorConfig, build_examples, generate_corpus, read_dataset, split_dataset, write_dataset
from blockrec.errors import CheckpointError, ContractError, DatasetParseError, DimensionError, TrainingError

DATA_ENV = "BLOCKREC_DATA_DIR"
SPLITS = ("train", "val", "test")

logger = logging.getLogger("blockrec")


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_ENV, "data"))


def load_split(data, split: str) -> list:
    """``data`` is a dataset file or a directory written by ``gen-data``."""
    path = Path(data)
    if path.is_dir():
        path = path / f"{split}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no dataset at {path}")
    return read_dataset(path)


def load_run_config(args) -> trainer.RunConfig:
    cfg = trainer.RunConfig.load(args.config) if getattr(args, "config", None) else trainer.RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "objectives", None):
        overrides["objectives"] = args.objectives
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    return trainer.RunConfig.from_dict({**cfg.to_dict(), **overrides}) if overrides else cfg


def cmd_gen_data(args) -> int:
    raw_cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        raw_cfg["seed"] = args.seed
    cfg = GeneratorConfig.from_dict(raw_cfg)
    out = Path(args.out) if args.out else default_data_dir()
    out.mkdir(parents=True, exist_ok=True)
    examples, rejections = build_examples(generate_corpus(cfg), cfg)
    parts = split_dataset(examples, seed=cfg.seed)
    for name, part in zip(SPLITS, parts):
        write_dataset(out / f"{name}.jsonl", part)
    reasons: dict = {}
    for r in rejections:
        reasons[r.reason] = reasons.get(r.reason, 0) + 1
    summary = {
        "generator": cfg.to_dict(),
        "kept": len(examples),
        "rejected": reasons,
        "splits": {name: len(part) for name, part in zip(SPLITS, parts)},
    }
    (out / "manifest.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary["splits"]), f"rejected={reasons}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    data = args.data or cfg.data_path or default_data_dir()
    ckpt = args.checkpoint or cfg.checkpoint_path
    if ckpt is None:
        raise ValueError("a checkpoint path is required (--checkpoint or checkpoint_path in the config)")
    cfg = trainer.RunConfig.from_dict({**cfg.to_dict(), "data_path": str(data), "checkpoint_path": str(ckpt)})
    result = trainer.train(cfg, load_split(data, "train"), load_split(data, "val"))
    log = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "best_epoch": result.best_epoch,
           "epochs": result.log}
    if args.log:
        Path(args.log).parent.mkdir(parents=True, exist_ok=True)
        Path(args.log).write_text(json.dumps(log, indent=2))
    print(f"best epoch {result.best_epoch}: {result.best_val}")
    return 0


def restore_model(path) -> tuple:
    meta = read_checkpoint_metadata(path)
    if "run_config" not in meta:
        raise CheckpointError(f"{path} carries no run_config metadata")
    cfg = trainer.RunConfig.from_dict(meta["run_config"])
    store = trainer.build_model(cfg)
    store.load(path)
    return cfg, store


def dump_traces(path, examples, store, config: dec.DecoderConfig) -> None:
    with open(path, "w") as fh, ad.no_grad():
        for ex in examples:
            trace = dec.decode(enc.encode_all(ex, store), store, config)
            fh.write(json.dumps({
                "query_id": ex.query_id,
                "gold": ex.label_indices.tolist(),
                "iterations": [
                    {"pointers": list(it.pointers), "scores": it.scores.data.round(6).tolist()}
                    for it in trace.iterations
                ],
            }) + "\n")


def cmd_eval(args) -> int:
    cfg, store = restore_model(args.checkpoint)
    examples = load_split(args.data or cfg.data_path or default_data_dir(), args.split)
    report = trainer.evaluate_model(examples, store, cfg)
    report.metadata["checkpoint"] = str(args.checkpoint)
    if args.report:
        report.save(args.report)
    if args.dump_trace:
        dump_traces(args.dump_trace, examples, store, cfg.decoder)
    print(json.dumps(report.row()))
    return 0


def cmd_mmr(args) -> int:
    cfg = load_run_config(args)
    data = args.data or cfg.data_path or default_data_dir()
    ckpt = Path(args.checkpoint)
    if ckpt.exists():
        meta = read_checkpoint_metadata(ckpt)
        enc_cfg = enc.EncoderConfig(**meta.get("encoder", cfg.encoder.__dict__))
        store = baseline.init_classifier(enc_cfg, seed=cfg.seed)
        store.load(ckpt)
    else:
        store = trainer.train_mmr_classifier(cfg, load_split(data, "train"))
        store.save(ckpt, metadata={"encoder": cfg.encoder.__dict__, "seed": cfg.seed})
        logger.info("trained classifier saved to %s", ckpt)
    meta = {"row": f"mmr(γ = {args.gamma})", "gamma": args.gamma, "checkpoint": str(ckpt)}
    report = trainer.evaluate_mmr(load_split(data, args.split), store, args.gamma, meta)
    if args.report:
        report.save(args.report)
    print(json.dumps(report.row()))
    return 0


def cmd_run_matrix(args) -> int:
    cfg = load_run_config(args)
    data = args.data or cfg.data_path or default_data_dir()
    rows = tuple(args.rows.split(",")) if args.rows else trainer.TABLE1_ROWS
    report = trainer.run_matrix(cfg, *(load_split(data, s) for s in SPLITS), rows=rows)
    if args.report:
        report.save(args.report)
    print(report.table())
    return 1 if any("error" in r for r in report.rows.values()) else 0


def cmd_gradcheck(args) -> int:
    from blockrec.diagnostics import run_gradient_suite

    results = run_gradient_suite(args.seed or 0)
    for r in results:
        print(f"{'ok  ' if r.ok else 'FAIL'} {r.name:<36} rel_err={r.rel_error:.2e}")
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockrec", description="Block-level suggestion ranking experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus and split it")
    p.add_argument("--config", help="generator config (JSON)")
    p.add_argument("--out", help=f"output directory (default ${DATA_ENV} or ./data)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one pointer-network run")
    p.add_argument("--config", help="run config (JSON)")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", help="where to write the best checkpoint")
    p.add_argument("--log", help="write the training log here (JSON)")
    p.add_argument("--objectives", help="e.g. ce+f1+div; overrides the config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory or file")
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--report", help="write the metrics report here (JSON)")
    p.add_argument("--dump-trace", help="write every query's decode trace here (JSONL)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mmr-baseline", help="classifier + MMR baseline; trains the classifier if missing")
    p.add_argument("--gamma", type=float, default=0.6)
    p.add_argument("--checkpoint", required=True, help="classifier checkpoint (read, or written after training)")
    p.add_argument("--config", help="run config supplying encoder dims, lr and classifier epochs")
    p.add_argument("--data", help="dataset directory or file")
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--report")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_mmr)

    p = sub.add_parser("run-matrix", help="train and evaluate every comparison row")
    p.add_argument("--config", help="base run config (JSON)")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--rows", help="comma-separated subset of row names")
    p.add_argument("--report")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run_matrix)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, CheckpointError, ContractError, DatasetParseError,
            DimensionError, TrainingError) as exc:
        print(f"blockrec {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
