"""Command-line entry point: ``earl audit | train | sweep | report``.

Exit codes: 0 success, 1 an asserted audit or experiment check failed,
2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VIOLATION,
    ConfigError,
    load_config,
    report,
    run_audits,
    run_experiment,
    sweep,
    temperature_grid,
)


def _seeds(text):
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="earl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="run the operator and shaping audits over the random MDP corpus")
    p.add_argument("--corpus-seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--output", default="audits")
    p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)

    for name, text in (("train", "train one configuration over its seeds"),
                       ("sweep", "train the temperature grid around one configuration")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="INI config file")
        p.add_argument("--seeds", type=_seeds, help="override the seed list, e.g. '0,1,2'")
        p.add_argument("--output", help="override the output directory")
        p.add_argument("--plot", action="store_true")
        if name == "sweep":
            p.add_argument("--alphas", type=lambda s: [float(x) for x in s.split(",")], default=[0.01, 0.1, 1.0])
            p.add_argument("--decay-rate", type=float, default=0.99)

    p = sub.add_parser("report", help="summarise aggregate CSVs below a directory")
    p.add_argument("directory")
    p.add_argument("--plot", action="store_true")
    return parser


def _configure(args):
    config = load_config(args.config)
    if args.seeds:
        config.seeds = args.seeds
    if args.output:
        config.output = args.output
    if args.plot:
        config.plot = True
    return config


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "audit":
            if args.trials < 0:
                raise ConfigError("--trials must be >= 0")
            status, summary = run_audits(args.corpus_seed, args.trials, args.output, args.inject_bug)
            for key, value in summary.items():
                print(f"{key} = {value}")
            return status
        if args.command == "train":
            result = run_experiment(_configure(args))
            print(f"{result.config.name}: {len(result.records)} seeds in {result.seconds:.1f}s -> {result.config.run_dir}")
            return EXIT_VIOLATION if result.failures else EXIT_OK
        if args.command == "sweep":
            results = sweep(temperature_grid(_configure(args), args.alphas, args.decay_rate))
            print(report(Path(next(iter(results.values())).config.output)))
            return EXIT_VIOLATION if any(r.failures for r in results.values()) else EXIT_OK
        if args.command == "report":
            if not Path(args.directory).is_dir():
                raise ConfigError(f"no such directory: {args.directory}")
            print(report(args.directory, args.plot))
            return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
