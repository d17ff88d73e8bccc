"""highlight: render sentences a MIL model attends to."""

from __future__ import annotations

import argparse
import sys

from app.cli.common import add_common_arguments, resolve_config, run_directory, write_manifest
from app.core.files import atomic_write_text
from app.models.run import HighlightFormat, HighlightRunConfig
from app.services.data_service import read_corpus
from app.services.highlight import highlight_reviews, render_ansi, render_html
from app.services.model_store import load_model

COMMAND = "highlight"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(COMMAND, help="Highlight high-attention sentences")
    add_common_arguments(parser)
    parser.add_argument("--model-dir", help="Directory written by train (MIL models only)")
    parser.add_argument("--reviews", help="Reviews JSONL")
    parser.add_argument("--threshold", type=float, help="Highlight sentences with weight above")
    parser.add_argument("--format", choices=[f.value for f in HighlightFormat])
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(
        HighlightRunConfig,
        args,
        {
            "model_dir": args.model_dir,
            "reviews": args.reviews,
            "threshold": args.threshold,
            "format": args.format,
        },
    )
    directory = run_directory(COMMAND, config)
    model, _ = load_model(config.model_dir)
    corpus = read_corpus(config.reviews, model.spec.num_classes)
    views = highlight_reviews(model, corpus.reviews, config.threshold)

    if config.format is HighlightFormat.HTML:
        path = atomic_write_text(directory / "highlight.html", render_html(views))
    else:
        text = render_ansi(views)
        path = atomic_write_text(directory / "highlight.txt", text)
        sys.stdout.write(text)
    write_manifest(directory, COMMAND, config, [path])
    return 0
