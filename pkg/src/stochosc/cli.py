"""Command-line entry point: ``stochosc <command> --config run.json``.

Exit codes: 0 success or pass, 1 acceptance threshold not met, 2 invalid
configuration.
"""

import argparse
import sys

from .config import load_config
from .errors import ConfigError, PreconditionError, ValidationError
from .experiments import COMMANDS, EXIT_CONFIG


def build_parser():
    parser = argparse.ArgumentParser(prog="stochosc", description="Stochastic oscillator experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--paths", type=int, help="number of paths (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads; never changes the output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, seed=args.seed, paths=args.paths, output_dir=args.out)
        result = COMMANDS[args.command](cfg, threads=args.threads)
    except (ConfigError, ValidationError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in result.files:
        print(name)
    if result.summary:
        print(" ".join(f"{k}={v}" for k, v in sorted(result.summary.items())))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
