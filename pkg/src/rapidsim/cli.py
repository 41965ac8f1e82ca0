"""Command line entry point: ``rapidsim run | sweep | validate``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .evaluation import ConfigError, ExperimentConfig, NumericError, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("rapidsim")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if getattr(args, "powers", None):
        overrides["P_dBm"] = list(args.powers)
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def _run(args) -> int:
    cfg = _load(args)
    log.info("running %d trials of %s at P = %s dBm", cfg.trials, cfg.schemes, cfg.P_dBm)
    result = run_experiment(cfg)
    csv_path, json_path = result.write(args.out, verbose=args.verbose)
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def _validate(args) -> int:
    from .validation import run_checks

    failures = 0
    for name, ok, detail in run_checks(quick=not args.full):
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        failures += not ok
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rapidsim",
                                     description="Cooperative mmWave beam selection simulator")
    parser.add_argument("-v", "--log-level", default="WARNING",
                        help="logging level (DEBUG, INFO, WARNING, ...)")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("config", help="experiment config (.toml or .json)")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--verbose", action="store_true",
                       help="include per-trial arrays in the JSON output")

    run = sub.add_parser("run", help="run one experiment")
    experiment_args(run)
    run.set_defaults(func=_run)

    sweep = sub.add_parser("sweep", help="run an experiment over a list of powers")
    experiment_args(sweep)
    sweep.add_argument("--powers", type=float, nargs="+", required=True, metavar="DBM",
                       help="transmit powers in dBm")
    sweep.set_defaults(func=_run)

    val = sub.add_parser("validate", help="run the built-in invariant checks")
    val.add_argument("--full", action="store_true", help="use full-size sample counts")
    val.set_defaults(func=_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, ArithmeticError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
