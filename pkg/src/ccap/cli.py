"""Batch command-line interface.

Subcommands: synth, train, evaluate, predict, tune, profile.
Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import PipelineConfig
from .errors import CcapError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ccap", description="Credit-card approval prediction pipeline")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    p.add_argument("--rows", type=int, default=20000, help="number of applicants")
    p.add_argument("--imbalance", type=float, default=0.05, help="positive (bad) rate")
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train all models and write report + artifact")
    p.add_argument("--app", required=True, help="application CSV")
    p.add_argument("--credit", required=True, help="credit-history CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, help="override the decision threshold")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p = sub.add_parser("evaluate", help="score a labeled dataset with a saved artifact")
    p.add_argument("--artifact", required=True)
    p.add_argument("--app", required=True)
    p.add_argument("--credit", required=True)
    p.add_argument("--out", help="output directory for the report")
    p.add_argument("--threshold", type=float)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("predict", help="score applicants with a saved artifact")
    p.add_argument("--artifact", required=True)
    p.add_argument("--app", required=True)
    p.add_argument("--credit", help="credit-history CSV (required for recency features)")
    p.add_argument("--out", help="output CSV (defaults to stdout)")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("tune", help="random hyperparameter search by CV AUC")
    p.add_argument("--app", required=True)
    p.add_argument("--credit", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--learner", help="single learner kind (default: all stack bases)")
    p.add_argument("--budget", type=int, help="trials per learner")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the trial log JSON here")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("profile", help="cross-tab counts and label rates")
    p.add_argument("--app", required=True)
    p.add_argument("--credit", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--group", required=True, help="comma-separated categorical columns")
    p.add_argument("--out", help="output text file (defaults to stdout)")

    return parser


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(getattr(args, "config", None))
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("protocol", {})["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        overrides.setdefault("protocol", {})["threshold"] = args.threshold
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def _cmd_synth(args) -> int:
    from .synth import write_files

    os.makedirs(args.out, exist_ok=True)
    app_path = os.path.join(args.out, "application.csv")
    credit_path = os.path.join(args.out, "credit_record.csv")
    stats = write_files(app_path, credit_path, args.rows, args.imbalance, args.seed)
    print(json.dumps({"app": app_path, "credit": credit_path, **stats}, indent=2))
    return 0


def _cmd_train(args) -> int:
    from .pipeline import run_train

    config = _load_config(args)
    result = run_train(
        config,
        args.app,
        args.credit,
        out_dir=args.out,
        threads=args.threads,
        figures=not args.no_figures,
    )
    sys.stdout.write(open(os.path.join(args.out, "report.txt"), encoding="utf-8").read())
    print(f"artifact: {os.path.join(args.out, 'model.ccap')}")
    return 0


def _cmd_evaluate(args) -> int:
    from .report import render_table
    from .pipeline import run_evaluate

    report = run_evaluate(
        args.artifact,
        args.app,
        args.credit,
        out_dir=args.out,
        threshold=args.threshold,
        figures=not args.no_figures,
    )
    sys.stdout.write(render_table(report["models"]))
    return 0


def _cmd_predict(args) -> int:
    from .pipeline import run_predict

    rows = run_predict(
        args.artifact, args.app, args.credit, out_path=args.out, threshold=args.threshold
    )
    if args.out is None:
        sys.stdout.write("ID,probability,decision\n")
        for id_, p, d in rows:
            sys.stdout.write(f"{id_},{p:.10g},{d}\n")
    else:
        print(f"wrote {len(rows)} scored rows to {args.out}")
    return 0


def _cmd_tune(args) -> int:
    from .search import run_tune

    config = _load_config(args)
    result = run_tune(
        config,
        args.app,
        args.credit,
        learner=args.learner,
        budget=args.budget,
        threads=args.threads,
    )
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        best = {k: v["best_params"] for k, v in result["results"].items()}
        print(json.dumps(best, indent=2, sort_keys=True))
    else:
        print(text)
    return 0


def _cmd_profile(args) -> int:
    from .pipeline import run_profile
    from .report import render_profile

    config = _load_config(args)
    groups = [g.strip() for g in args.group.split(",") if g.strip()]
    if not groups:
        raise UsageError("--group needs at least one column name")
    rows = run_profile(config, args.app, args.credit, groups)
    text = render_profile(rows, groups)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "tune": _cmd_tune,
    "profile": _cmd_profile,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return _COMMANDS[args.command](args)
    except CcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
