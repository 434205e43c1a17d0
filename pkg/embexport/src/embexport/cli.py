"""`export-embeddings`: series names -> ssmamba embedding file."""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="export-embeddings",
        description="Encode series names with a pretrained text encoder "
                    "and write an ssmamba embedding table.")
    parser.add_argument("--names", required=True,
                        help="text file, one series name per line")
    parser.add_argument("--model", required=True,
                        help="model hub id or local model directory")
    parser.add_argument("--out", required=True, help="output embedding file")
    parser.add_argument("--pooling", default="cls", choices=["cls", "mean"],
                        help="sentence vector: CLS token or token mean")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        n = export(args.names, args.model, args.out, args.pooling)
    except (ExportError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {n} embeddings to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
