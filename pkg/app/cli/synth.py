"""synth: generate a synthetic corpus with a controlled witness rate."""

from __future__ import annotations

import argparse

from app.cli.common import add_common_arguments, resolve_config, run_directory, write_manifest
from app.core.files import atomic_write_json
from app.models.run import SynthRunConfig
from app.services.corpus_stats import corpus_stats
from app.services.data_service import synthesize, write_corpus

COMMAND = "synth"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(COMMAND, help="Generate train/validation/test JSONL corpora")
    add_common_arguments(parser)
    parser.add_argument("--wr", type=float, help="Witness rate in (0, 1]")
    parser.add_argument("--reviews", type=int, help="Training reviews")
    parser.add_argument("--classes", type=int, help="Number of classes C")
    parser.add_argument("--fixed-witnesses", type=int, help="Plant exactly this many witnesses")
    parser.add_argument("--noise", type=float, help="Token noise rate")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(
        SynthRunConfig,
        args,
        {
            "synthetic.witness_rate": args.wr,
            "synthetic.num_reviews": args.reviews,
            "synthetic.num_classes": args.classes,
            "synthetic.fixed_witnesses": args.fixed_witnesses,
            "synthetic.noise_rate": args.noise,
            "synthetic.seed": args.seed,
        },
    )
    directory = run_directory(COMMAND, config)
    data = synthesize(config.synthetic, keep_gold=config.keep_gold)

    outputs = [
        write_corpus(corpus, directory / f"{split.value}.jsonl")
        for split, corpus in data.splits().items()
    ]
    measured = data.train if config.keep_gold else data.test
    stats = corpus_stats(measured, config.synthetic.background_class)
    outputs.append(atomic_write_json(directory / "stats.json", stats.model_dump(mode="json")))
    write_manifest(directory, COMMAND, config, outputs)
    return 0
