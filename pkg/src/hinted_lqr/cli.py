"""Command-line entry point: ``hinted-lqr run | fit | calibrate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from .errors import ConfigError, InsufficientData
from .harness import fit_regret_growth, load_config, read_records, run_experiment
from .presets import calibrate, get_preset

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    records = run_experiment(cfg, out=args.out, workers=args.workers, traj_dump=args.traj_dump)
    print(f"{len(records)} runs written to {args.out or cfg.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    records = read_records(args.inp)
    fit = fit_regret_growth(records, metric=args.metric)
    print(json.dumps(fit, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    preset = get_preset(args.preset)
    cal = calibrate(preset.truth, directions=args.directions, seed=args.seed)
    print(json.dumps(asdict(cal), sort_keys=True, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hinted-lqr", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run every (horizon, seed) cell of a config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--traj-dump", action="store_true", default=None, help="write per-run trajectory CSVs")
    run.set_defaults(func=_cmd_run)

    fit = sub.add_parser("fit", help="fit regret growth from a results directory")
    fit.add_argument("--in", dest="inp", required=True)
    fit.add_argument("--metric", choices=("paired", "raw"), default="paired")
    fit.set_defaults(func=_cmd_fit)

    cal = sub.add_parser("calibrate", help="C0 / eps0 perturbation sweep for a preset")
    cal.add_argument("--preset", required=True)
    cal.add_argument("--directions", type=int, default=64)
    cal.add_argument("--seed", type=int, default=0)
    cal.set_defaults(func=_cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
