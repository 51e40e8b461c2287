"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .config import load_config
from .errors import TermforgeError

SUBCOMMANDS = {
    "prepare": "generate/normalize the configured corpora and fixtures",
    "stats": "corpus statistics and vocabulary overlap reports",
    "train-smt": "word alignment, phrase table, and language model",
    "train-nmt": "neural encoder-decoder training",
    "tune": "MERT weight tuning on the development set",
    "adapt": "domain adaptation: re-tune SMT weights, fine-tune NMT",
    "inject": "rank external terminology and annotate the eval source",
    "translate": "decode an input file with the chosen system",
    "evaluate": "score hypotheses with BLEU/chrF3/METEOR",
    "report": "assemble the matrix report from collected results",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="termforge",
        description="Terminology-aware machine translation workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="pipeline config file")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        cmd.add_argument("--threads", type=int, default=None)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument(
            "--force", action="store_true",
            help="allow overwriting an existing model directory",
        )
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("TERMFORGE_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.overrides)
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "prepare":
            pipeline.run_prepare(cfg, force=args.force)
        elif args.command == "stats":
            sys.stdout.write(pipeline.run_stats(cfg))
        elif args.command == "train-smt":
            pipeline.run_train_smt(cfg, force=args.force)
        elif args.command == "train-nmt":
            pipeline.run_train_nmt(cfg, force=args.force)
        elif args.command == "tune":
            pipeline.run_tune(cfg)
        elif args.command == "adapt":
            pipeline.run_adapt(cfg)
        elif args.command == "inject":
            pipeline.run_inject(cfg)
        elif args.command == "translate":
            pipeline.run_translate(cfg)
        elif args.command == "evaluate":
            score = pipeline.run_evaluate(cfg)
            sys.stdout.write(
                f"BLEU {score.bleu:.2f}  chrF3 {score.chrf3:.2f}  "
                f"METEOR {score.meteor:.2f}  ({score.segment_count} segments)\n"
            )
        elif args.command == "report":
            sys.stdout.write(pipeline.run_report(cfg))
    except FileNotFoundError as exc:
        sys.stderr.write(f"termforge {args.command}: missing input: {exc}\n")
        return 1
    except TermforgeError as exc:
        sys.stderr.write(f"termforge {args.command}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
