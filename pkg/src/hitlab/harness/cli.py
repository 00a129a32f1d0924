"""Command-line entry point: ``hitlab <command> --config cfg.json``.

Exit codes: 0 success, 1 a comparison or scaling check failed, 2 invalid
configuration or arguments outside a formula's domain, 3 resource limits.
"""
from __future__ import annotations

import argparse
import sys

from ..montecarlo import ResourceError
from ..specfun import DomainError
from . import commands
from .config import ConfigError, load_config

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

_COMMANDS = {
    "eval": commands.cmd_eval,
    "estimate": commands.cmd_estimate,
    "compare": commands.cmd_compare,
    "sausage": commands.cmd_sausage,
    "scaling-check": commands.cmd_scaling_check,
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hitlab", description="Brownian hitting asymptotics vs simulation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON (schema 1)")
        p.add_argument("--out", default=None, help="output directory (default: outputs.dir of the config)")
        p.add_argument("--seed", type=_u64, default=None, help="override cfg.seed")
        p.add_argument("--workers", type=_positive, default=None, help="override cfg.workers")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        conf = load_config(args.config)
        if args.seed is not None:
            conf = conf.with_seed(args.seed)
        if args.workers is not None:
            conf = conf.with_workers(args.workers)
        out = commands.output_dir(conf, args.out)
        result = _COMMANDS[args.command](conf, out)
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(result, dict) and result.get("pass") is False:
        print(f"{args.command}: check failed (see {out})", file=sys.stderr)
        return EXIT_FAILED
    print(f"{args.command}: wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
