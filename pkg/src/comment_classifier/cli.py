"""Command-line entry point.

Exit codes: 0 when the requested artifacts were fully produced, 2 for
usage errors (unknown flags, unknown language/category, missing
required settings), 1 when a pipeline step fails.
"""

from __future__ import annotations

import argparse
import sys

from .errors import CheckpointError, ConfigError, SchemaError
from .pipeline import (PipelineError, load_pipeline_config, run_eval, run_posttrain,
                       run_predict, run_report, run_split, run_train_all,
                       run_train_category)

USAGE_EXIT = 2
FAILURE_EXIT = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comment-classifier",
        description="Train and evaluate per-category binary code-comment classifiers.",
    )
    parser.add_argument("--seed", type=int, default=None, help="global random seed (default 0)")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--data-root", default=None, help="root with <language>/<category>.csv")
    parser.add_argument("--work-dir", default=None, help="artifact directory (default ./workdir)")
    parser.add_argument("--no-posttrain", action="store_true",
                        help="skip the shared post-training stage")
    parser.add_argument("--no-hsum", action="store_true",
                        help="use the plain top-layer head instead of layer aggregation")
    parser.add_argument("--max-avg-runtime", type=float, default=None,
                        help="runtime budget (seconds) for the submission score")
    parser.add_argument("--runtime-repetitions", type=int, default=None,
                        help="runtime measurement repetitions; 0 disables measurement")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("split", help="materialize stratified splits as CSVs")
    sub.add_parser("posttrain", help="train the shared backbone on all languages")

    train = sub.add_parser("train", help="two-stage fine-tuning for one category")
    train.add_argument("--language", required=True)
    train.add_argument("--category", required=True)

    sub.add_parser("train-all", help="post-train if needed, then train every category")
    sub.add_parser("eval", help="test-set metrics, runtime, and submission score")

    predict = sub.add_parser("predict", help="label a CSV with a trained category model")
    predict.add_argument("--language", required=True)
    predict.add_argument("--category", required=True)
    predict.add_argument("--input", required=True)
    predict.add_argument("--output", default=None)

    sub.add_parser("report", help="re-render the saved evaluation report")
    return parser


def _config_from_args(args: argparse.Namespace):
    overrides = {
        "seed": args.seed,
        "data_root": args.data_root,
        "work_dir": args.work_dir,
        "max_avg_runtime": args.max_avg_runtime,
        "runtime_repetitions": args.runtime_repetitions,
    }
    if args.no_posttrain:
        overrides["posttrain_enabled"] = False
    if args.no_hsum:
        overrides["hsum_enabled"] = False
    return load_pipeline_config(args.config, overrides)


def run_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT

    try:
        cfg = _config_from_args(args)
        if args.command == "split":
            written = run_split(cfg)
            print(f"wrote {len(written)} split files under {cfg.work_dir}/splits")
        elif args.command == "posttrain":
            run_posttrain(cfg)
        elif args.command == "train":
            run_train_category(cfg, args.language, args.category)
        elif args.command == "train-all":
            run_train_all(cfg)
        elif args.command == "eval":
            run_eval(cfg)
        elif args.command == "predict":
            text = run_predict(cfg, args.language, args.category, args.input, args.output)
            if args.output is None:
                sys.stdout.write(text)
        elif args.command == "report":
            print(run_report(cfg), end="")
        return 0
    except KeyError as exc:
        # unknown language/category
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return USAGE_EXIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (PipelineError, SchemaError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
