"""
cogtraj - cognitive-feature trajectory prediction.

Command-line entry point: parses the global flags, initializes settings and the
window cache, and dispatches to the registered subcommand.
"""

import argparse
import logging
import sys

from commands import register_commands
from commands.common import CommandContext, parse_overrides
from core.cache import init_window_cache
from core.config import init_settings
from core.decorators import exit_codes
from core.errors import UsageError

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argument errors are usage errors (exit 1), not argparse's exit 2."""

    def __init__(self, *args, **kwargs):
        # unknown --key value pairs are config overrides and must not prefix-match a flag
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=default, help="Global seed (sets train.seed)")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else "out", help="Output directory")
    parser.add_argument("--threads", type=int, default=default, help="Worker threads")
    parser.add_argument("--log-level", default=default, help="DEBUG, INFO, WARNING or ERROR")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cogtraj", description="Trajectory prediction with perceived-safety features")
    _global_flags(parser, suppress=False)
    # the same flags are accepted after the subcommand name
    shared = _Parser(add_help=False)
    _global_flags(shared, suppress=True)
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    register_commands(subparsers, parents=[shared])
    return parser


@exit_codes
def _dispatch(argv: list[str] | None) -> int | None:
    args, extra = build_parser().parse_known_args(argv)
    settings = init_settings()
    level = (args.log_level or settings.log_level).upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise UsageError(f"unknown log level {level!r}")
    logging.getLogger().setLevel(level)
    if args.threads is not None and args.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {args.threads}")

    init_window_cache(settings.cache_dir, settings.cache_enabled)
    ctx = CommandContext(args=args, overrides=parse_overrides(extra), settings=settings)
    logger.info(f"[INIT] cogtraj {args.command} -> {ctx.out}")
    return args.handler(ctx)


def main(argv: list[str] | None = None) -> int:
    return _dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
