"""
eval: score a saved model or a keyword rule on a test corpus with the binary
or three-class protocol.
"""

from __future__ import annotations

import argparse

from app.cli.common import add_common_arguments, resolve_config, run_directory, write_manifest
from app.core.files import atomic_write_json, atomic_write_text
from app.models.corpus import Split
from app.models.run import EvalRunConfig
from app.models.spec import ModelKind
from app.services.baselines import KeywordModel
from app.services.classifier import ReviewClassifier
from app.services.data_service import read_corpus
from app.services.model_store import load_model
from app.services.protocols import curve_csv, evaluate

COMMAND = "eval"
REPORT_FILE = "report.json"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(COMMAND, help="Evaluate a trained model or a keyword rule")
    add_common_arguments(parser)
    parser.add_argument("--model-dir", help="Directory written by train")
    parser.add_argument(
        "--baseline",
        choices=[kind.value for kind in ModelKind if kind.is_keyword],
        help="Evaluate a keyword rule instead of a saved model",
    )
    parser.add_argument("--test", help="Test corpus JSONL with gold segment labels")
    parser.add_argument("--mode", choices=["binary", "three-class"])
    parser.add_argument("--positive-class", type=int)
    parser.add_argument("--folds", type=int, help="Threshold cross-validation folds")
    parser.add_argument("--avg-attention", choices=["inverse_m", "one"])
    parser.add_argument("--bootstrap", action="store_true", default=None)
    parser.add_argument("--iterations", type=int, help="Bootstrap iterations")
    parser.add_argument("--pr-curve", action="store_true", default=None)
    parser.add_argument(
        "--cv-folds", type=int, help="Cross-validate a seg-lr model on the test segments"
    )
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    config = resolve_config(
        EvalRunConfig,
        args,
        {
            "model_dir": args.model_dir,
            "baseline": args.baseline,
            "test": args.test,
            "mode": args.mode,
            "positive_class": args.positive_class,
            "folds": args.folds,
            "avg_attention": args.avg_attention,
            "bootstrap": args.bootstrap,
            "bootstrap_iterations": args.iterations,
            "pr_curve": args.pr_curve,
            "cv_folds": args.cv_folds,
        },
    )
    directory = run_directory(COMMAND, config)
    model: ReviewClassifier
    if config.baseline is not None:
        model = KeywordModel.for_kind(config.baseline)
    else:
        model, _ = load_model(config.model_dir)
    corpus = read_corpus(config.test, model.spec.num_classes, Split.TEST)
    report, curves = evaluate(model, corpus, config)

    outputs = [atomic_write_json(directory / REPORT_FILE, report.model_dump(mode="json"))]
    for level, curve in sorted(curves.items()):
        outputs.append(atomic_write_text(directory / f"pr_{level}.csv", curve_csv(curve)))
    write_manifest(directory, COMMAND, config, outputs)
    return 0
