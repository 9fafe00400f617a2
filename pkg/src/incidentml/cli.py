"""Batch command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.
Global flags come before the subcommand:

    incidentml --config cfg.json --out runs/ [--seed N] [--jobs N] <command>
"""
from __future__ import annotations

import argparse
import sys

from . import experiment
from .errors import EmptyDatasetError, InvalidInputError, SchemaError

COMMANDS = ("ingest", "split", "train", "evaluate", "importance", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="incidentml",
        description="Entity-level cyber incident occurrence/frequency modeling pipeline.",
    )
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", required=True, help="output root; runs nest under it")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for train")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="assemble matrices from the raw CSV inputs")
    sub.add_parser("split", help="write the train/test split")
    sub.add_parser("train", help="train the configured model roster")
    sub.add_parser("evaluate", help="write metric reports and heatmap data")
    sub.add_parser("importance", help="write feature-importance tables")
    sub.add_parser("report", help="render heatmaps and a run summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = experiment.load_config(args.config, seed_override=args.seed)
        run_dir = experiment.run_dir_for(config, args.out)
        if args.command == "ingest":
            manifest = experiment.run_ingest(config, run_dir)
            print(
                f"ingest: {manifest['post_dedupe_records']} records -> "
                f"{manifest['joined_rows']} firm-year rows ({run_dir})"
            )
        elif args.command == "split":
            payload = experiment.run_split(config, run_dir)
            print(
                f"split: {len(payload['train_rows'])} train / "
                f"{len(payload['test_rows'])} test rows"
            )
        elif args.command == "train":
            manifest = experiment.run_train(config, run_dir, jobs=max(1, args.jobs))
            print(
                f"train: {len(manifest['model_seconds'])} models trained, "
                f"{len(manifest['aborted'])} aborted"
            )
        elif args.command == "evaluate":
            manifest = experiment.run_evaluate(config, run_dir)
            print(f"evaluate: reports written ({len(manifest['absent_models'])} absent)")
        elif args.command == "importance":
            manifest = experiment.run_importance(config, run_dir)
            print(f"importance: tables written ({len(manifest['skipped'])} skipped)")
        else:
            summary = experiment.run_report(config, run_dir)
            print(f"report: {len(summary['rendered'])} heatmaps rendered ({run_dir})")
        return 0
    except (SchemaError, InvalidInputError, EmptyDatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
