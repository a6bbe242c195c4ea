"""Command-line entry point.

Subcommands mirror the pipeline stages:

    diffjscc synth    --out DIR [--count N] [--size S] [--seed K]
    diffjscc ingest   --config CFG --out DIR
    diffjscc train    {jscc,ddpm,inn} --config CFG --out DIR
    diffjscc evaluate --config CFG --out DIR
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigurationError, DependencyError, IngestionError, ValidationError
from .config import load_config
from .data import synth_dataset
from .runner import run_evaluate, run_ingest, run_train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffjscc",
        description="Learned image transmission over AWGN with diffusion-based receivers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a deterministic synthetic image dataset")
    p_synth.add_argument("--out", required=True, help="directory to fill with PNGs")
    p_synth.add_argument("--count", type=int, default=200)
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--seed", type=int, default=0)

    for name, help_text in [
        ("ingest", "verify a dataset and write train/val/test splits"),
        ("evaluate", "run the (image, SNR, method) sweep and write metrics"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help="run directory for artifacts")

    p_train = sub.add_parser("train", help="train one pipeline stage")
    p_train.add_argument("stage", choices=["jscc", "ddpm", "inn"])
    p_train.add_argument("--config", required=True, help="YAML experiment config")
    p_train.add_argument("--out", required=True, help="run directory for artifacts")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            written = synth_dataset(args.out, args.count, args.size, args.seed)
            print(f"wrote {len(written)} images to {args.out}")
        elif args.command == "ingest":
            counts = run_ingest(load_config(args.config), args.out)
            print(f"splits written under {args.out}/splits: {counts}")
        elif args.command == "train":
            path = run_train(load_config(args.config), args.out, args.stage)
            print(f"checkpoint written: {path}")
        elif args.command == "evaluate":
            manifest = run_evaluate(load_config(args.config), args.out)
            print(f"evaluated {manifest.counts['cells']} cells; "
                  f"manifest: {args.out}/manifest.json")
    except (ValidationError, ConfigurationError, DependencyError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
