"""
Plumbing shared by every CLI verb: config resolution, run directories and
the run manifest.
"""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

from app.core.config import settings
from app.core.errors import ModelKindError
from app.core.files import atomic_write_json, sha256_file
from app.core.logging import get_logger
from app.models.run import ConfigT, RunManifest, load_run_config
from app.models.spec import MIL_KINDS, AggregationKind, ModelKind

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.json"

AGGREGATION_FLAGS = {
    "uniform": AggregationKind.UNIFORM,
    "avg": AggregationKind.UNIFORM,
    "softmax": AggregationKind.SOFTMAX_ATTENTION,
    "sigmoid": AggregationKind.SIGMOID_ATTENTION,
}


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="Override the run seed")
    parser.add_argument("--run-dir", help="Output directory")


def resolve_config(
    config_cls: type[ConfigT], args: argparse.Namespace, overrides: dict[str, Any]
) -> ConfigT:
    """Config file values, then flag overrides; logs the resolved result."""
    overrides = {"seed": args.seed, "run_dir": args.run_dir, **overrides}
    config = load_run_config(config_cls, args.config, overrides)
    logger.info("Resolved %s: %s", config_cls.__name__, config.model_dump_json())
    return config


def run_directory(command: str, config: ConfigT) -> Path:
    if config.run_dir is not None:
        directory = Path(config.run_dir)
    else:
        directory = Path(settings.RUN_ROOT) / f"{command}-seed{config.seed}"
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def parse_model_kind(name: str) -> ModelKind:
    """
    Raises:
        ModelKindError: name is not a model kind.
    """
    try:
        return ModelKind(name)
    except ValueError:
        trainable = [kind.value for kind in ModelKind if not kind.is_keyword]
        raise ModelKindError(name, trainable) from None


def kind_for_aggregation(name: str) -> ModelKind:
    """MIL kind selected by an --agg flag value."""
    aggregation = AGGREGATION_FLAGS.get(name)
    if aggregation is None:
        try:
            aggregation = AggregationKind(name)
        except ValueError:
            valid = sorted(AGGREGATION_FLAGS) + [kind.value for kind in AggregationKind]
            raise ModelKindError(name, valid) from None
    return next(kind for kind, agg in MIL_KINDS.items() if agg is aggregation)


def write_manifest(
    directory: Path, command: str, config: ConfigT, outputs: list[Path]
) -> Path:
    """Record the resolved config and the digest of every output."""
    manifest = RunManifest(
        command=command,
        config=config.model_dump(mode="json"),
        outputs={
            path.relative_to(directory).as_posix(): sha256_file(path)
            for path in sorted(outputs)
        },
    )
    path = atomic_write_json(directory / MANIFEST_FILE, manifest.model_dump(mode="json"))
    logger.info("Wrote %d outputs and manifest to %s", len(outputs), directory)
    return path
