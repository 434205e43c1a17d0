"""Command-line entry point.

Exit codes: 0 success, 2 config/usage error, 3 data error, 4 training
abort (NaN/divergence). SSMAMBA_SEED overrides the config seed. All
outputs land under --out.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys

from .config import Config, ConfigError, apply_overrides, config_hash, load_config
from .data import InputError, load_manifest, load_series_csv, synth_series, \
    write_series_csv
from .embedding import EmbeddingFormatError, EmbeddingTable, load_embedding_table
from .model import load_checkpoint
from .splines import export_spline
from .temporal import FEATURE_NAMES
from .trainer import TrainingAborted, elastic_context_sweep, evaluate_records, \
    run_ablation_suite, train, zero_shot_eval

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAIN = 4


def _load_cfg(args) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    env_seed = os.environ.get("SSMAMBA_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    cfg.validate()
    return cfg


def _load_table(args, cfg: Config) -> EmbeddingTable:
    if getattr(args, "embeddings", None):
        return load_embedding_table(args.embeddings)
    return EmbeddingTable.empty(cfg.emb_dim)


def _write_run_manifest(out_dir, subcommand, cfg, artifacts, config_path=None):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "subcommand": subcommand,
        "config_path": config_path,
        "config_hash": config_hash(cfg),
        "output_dir": os.path.abspath(out_dir),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "artifacts": artifacts,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    records = load_manifest(args.data)
    table = _load_table(args, cfg)
    train(cfg, records, table, out_dir=args.out)
    _write_run_manifest(args.out, "train", cfg,
                        ["manifest.json", "params.bin", "steps.tsv"],
                        args.config)
    return EXIT_OK


def cmd_eval(args) -> int:
    model, _, _ = load_checkpoint(args.run)
    cfg = model.cfg
    records = load_manifest(args.data)
    table = _load_table(args, cfg)
    report = evaluate_records(model, table, records, args.split)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "metrics.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_tsv())
    _write_run_manifest(args.out, "eval", cfg, ["metrics.tsv"])
    print(report.to_tsv(), end="")
    return EXIT_OK


def cmd_zeroshot(args) -> int:
    model, scalers, _ = load_checkpoint(args.run)
    cfg = model.cfg
    table = _load_table(args, cfg)
    rec = load_series_csv(args.csv, args.name)
    report = zero_shot_eval(model, table, rec, train_names=set(scalers))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.tsv"), "w", encoding="utf-8") as fh:
        fh.write(report.to_tsv())
    _write_run_manifest(args.out, "zeroshot", cfg, ["metrics.tsv"])
    print(report.to_tsv(), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    records = load_manifest(args.data)
    table = _load_table(args, cfg)
    results = run_ablation_suite(cfg, records, table, out_root=args.out)
    summary = ["variant\trmse\tmae"]
    for variant, (_, report) in results.items():
        summary.append(f"{variant}\t{report.average_rmse!r}\t{report.average_mae!r}")
    text = "\n".join(summary) + "\n"
    with open(os.path.join(args.out, "ablation.tsv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    _write_run_manifest(args.out, "ablate", cfg,
                        ["ablation.tsv"] + [f"{v}/" for v in results],
                        args.config)
    print(text, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    records = load_manifest(args.data)
    table = _load_table(args, cfg)
    L_set = [int(v) for v in args.lengths.split(",") if v.strip()]
    rows = elastic_context_sweep(cfg, records, table, L_set, out_dir=args.out)
    _write_run_manifest(args.out, "sweep", cfg, ["sweep.tsv"], args.config)
    for L, rmse in rows:
        print(f"{L}\t{rmse!r}")
    return EXIT_OK


def cmd_synth(args) -> int:
    rec = synth_series(args.kind, args.n, args.seed, args.name,
                       noise=args.noise)
    write_series_csv(rec, args.out)
    return EXIT_OK


def cmd_export_splines(args) -> int:
    model, _, _ = load_checkpoint(args.run)
    if model.kan.splines is None:
        raise InputError("checkpoint uses the sinusoidal encoder; no splines")
    os.makedirs(args.out, exist_ok=True)
    written = []
    for pos, j in enumerate(model.kan.feature_indices):
        name = FEATURE_NAMES[j]
        path = os.path.join(args.out, f"spline_{name}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(export_spline(model.kan.splines, pos))
        written.append(f"spline_{name}.txt")
    _write_run_manifest(args.out, "export-splines", model.cfg, written)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmamba",
        description="Semantic-spline selective state-space forecasting engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat key=value config file")
            p.add_argument("--set", action="append", default=[],
                           metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a model on a data manifest")
    common(p)
    p.add_argument("--data", required=True, help="JSON manifest of {name, path}")
    p.add_argument("--embeddings", help="embedding table file (hash fallback if omitted)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved run on a split")
    common(p, config=False)
    p.add_argument("--run", required=True, help="run directory with a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zeroshot", help="evaluate an unseen series by name")
    common(p, config=False)
    p.add_argument("--run", required=True)
    p.add_argument("--csv", required=True, help="CSV of the unseen series")
    p.add_argument("--name", required=True, help="series name to embed")
    p.add_argument("--embeddings")
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("ablate", help="run the four-way ablation suite")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="elastic context-window sweep")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--lengths", default="30,60,120",
                   help="comma-separated window lengths")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic series CSV")
    p.add_argument("--kind", required=True,
                   choices=["sine+trend", "two-season", "random-walk"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-splines",
                       help="dump each learned univariate spline as text")
    common(p, config=False)
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_export_splines)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, EmbeddingFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
