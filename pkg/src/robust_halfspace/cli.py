"""Command-line entry point: ``robust-halfspace <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 every trial failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import ConfigError, MissingResults, UnsupportedDimension

log = logging.getLogger("robust_halfspace")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", default="results", help="output directory")
    common.add_argument("--trials", type=int, help="trials per sweep point")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="robust-halfspace",
                                description="Noise-tolerant active learning of halfspaces.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the localized learner")
    sub.add_parser("compare", parents=[common], help="localized learner against baselines")
    pd = sub.add_parser("plot-data", parents=[common], help="write TSV curves from records")
    pd.add_argument("--results", metavar="DIR",
                    help="directory holding records.jsonl (defaults to --out)")
    cal = sub.add_parser("calibrate", parents=[common], help="estimate uniform band constants")
    cal.add_argument("--n-mc", type=int, default=200_000)
    adm = sub.add_parser("check-admissible", parents=[common],
                         help="Monte-Carlo admissibility checks")
    adm.add_argument("--n-mc", type=int, default=None)
    adm.add_argument("--part", type=int, action="append", choices=[1, 2, 3, 4, 5])
    return p


def _config(args) -> harness.ExperimentConfig:
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"trials={args.trials}")
    return harness.load_config(args.config, overrides, text=None if args.config else "")


def _print_summary(summary):
    for g in summary["groups"]:
        err = "nan" if g["error_mean"] is None else f"{g['error_mean']:.5f}"
        print(f"{g['learner']:<12} eps={g['epsilon']:.5g} eta={g['eta']:.5g} "
              f"success={g['successes']}/{g['trials']} failed={g['failed']} "
              f"mean_error={err} labels={g['labels_mean']:.1f}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "plot-data":
            paths = harness.emit_plot_data(args.results or args.out, args.out)
            for p in paths.values():
                print(p)
            return EXIT_OK
        cfg = _config(args)
        if args.command in ("run", "compare"):
            fn = harness.run_experiment if args.command == "run" else harness.compare_baselines
            summary = fn(cfg, args.out)
            _print_summary(summary)
            if summary["total_trials"] and summary["failed_trials"] == summary["total_trials"]:
                log.error("all %d trials failed", summary["total_trials"])
                return EXIT_ALL_FAILED
            return EXIT_OK
        if args.command == "calibrate":
            est = harness.calibrate(cfg, args.out, n_mc=args.n_mc)
            print(json.dumps(est, indent=2))
            return EXIT_OK
        if args.command == "check-admissible":
            parts = tuple(args.part) if args.part else (1, 2, 3, 4, 5)
            reports = harness.check_admissible(cfg, args.out, parts=parts, n_mc=args.n_mc)
            for r in reports:
                print(r.summary())
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedDimension as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingResults as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
