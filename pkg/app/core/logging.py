"""
Logging configuration.

Modules log through children of the "app" logger. The single handler sits
on that parent and writes to stderr, so stdout carries only rendered output.
"""

import logging
import sys

from app.core.config import settings
from app.core.errors import ConfigError

ROOT_LOGGER = "app"
LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"


def _root_logger() -> logging.Logger:
    root = logging.getLogger(ROOT_LOGGER)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        root.addHandler(handler)
        root.setLevel(settings.LOG_LEVEL.upper())
        root.propagate = False
    return root


def get_logger(name: str) -> logging.Logger:
    """Get a logger under the configured "app" parent."""
    _root_logger()
    return logging.getLogger(name)


def set_level(level: str) -> None:
    """
    Override the environment log level for this process.

    Raises:
        ConfigError: level is not a logging level name.
    """
    try:
        _root_logger().setLevel(level.upper())
    except ValueError as exc:
        raise ConfigError(f"unknown log level {level!r}") from exc
