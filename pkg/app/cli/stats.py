"""stats: witness statistics of a gold-labeled corpus."""

from __future__ import annotations

import argparse

from app.cli.common import add_common_arguments, resolve_config, run_directory, write_manifest
from app.core.files import atomic_write_json
from app.core.logging import get_logger
from app.models.run import StatsRunConfig
from app.services.corpus_stats import corpus_stats
from app.services.data_service import read_corpus

logger = get_logger(__name__)

COMMAND = "stats"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(COMMAND, help="Per-class witness statistics of a corpus")
    add_common_arguments(parser)
    parser.add_argument("--corpus", help="Corpus JSONL with gold segment labels")
    parser.add_argument("--classes", type=int, help="Number of classes C")
    parser.add_argument("--background-class", type=int, help="Class left out of the salient row")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(
        StatsRunConfig,
        args,
        {
            "corpus": args.corpus,
            "num_classes": args.classes,
            "background_class": args.background_class,
        },
    )
    directory = run_directory(COMMAND, config)
    corpus = read_corpus(config.corpus, config.num_classes)
    stats = corpus_stats(corpus, config.background_class)
    for label, row in stats.classes.items():
        logger.info(
            "class %s: %.1f%% of segments, witness rate %s",
            label,
            100 * row.segment_share,
            "n/a" if row.witness_rate is None else f"{row.witness_rate:.3f}",
        )
    path = atomic_write_json(directory / "stats.json", stats.model_dump(mode="json"))
    write_manifest(directory, COMMAND, config, [path])
    return 0
