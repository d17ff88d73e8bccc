"""
Command-line application: parser factory and entry point.

Verbs: synth | stats | train | eval | highlight. Library errors are mapped
to their exit codes here and nowhere else.
"""

from __future__ import annotations

import argparse
from collections.abc import Sequence

from app.cli import evaluate, highlight, stats, synth, train
from app.core.errors import HsanError
from app.core.logging import get_logger, set_level

logger = get_logger(__name__)


def create_parser() -> argparse.ArgumentParser:
    """Create the parser with every verb registered."""
    parser = argparse.ArgumentParser(
        prog="hsan",
        description="Multiple-instance review classification with segment attention.",
    )
    parser.add_argument("--log-level", help="Override HSAN_LOG_LEVEL, e.g. DEBUG or WARNING")
    subparsers = parser.add_subparsers(dest="command", required=True)
    synth.register(subparsers)
    stats.register(subparsers)
    train.register(subparsers)
    evaluate.register(subparsers)
    highlight.register(subparsers)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = create_parser().parse_args(argv)
    try:
        if args.log_level is not None:
            set_level(args.log_level)
        return int(args.func(args))
    except HsanError as exc:
        logger.error("%s failed: %s", args.command, exc.message)
        return exc.exit_code
