"""train: fit one model kind and write its model directory and training log."""

from __future__ import annotations

import argparse

from app.cli.common import (
    add_common_arguments,
    kind_for_aggregation,
    parse_model_kind,
    resolve_config,
    run_directory,
    write_manifest,
)
from app.core.files import atomic_write_json
from app.models.corpus import Split
from app.models.run import TrainRunConfig
from app.services.data_service import prepare_inputs, read_corpus
from app.services.model_store import make_spec, save_model
from app.services.training import stratified_split, train_model

COMMAND = "train"
MODEL_DIR = "model"
LOG_FILE = "train_log.jsonl"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(COMMAND, help="Train a model")
    add_common_arguments(parser)
    parser.add_argument("--model", help="Model kind, e.g. mil-sigmoid, rev-cnn, seg-lr")
    parser.add_argument("--agg", help="MIL aggregation: uniform, softmax or sigmoid")
    parser.add_argument("--train", help="Training corpus JSONL")
    parser.add_argument("--validation", help="Validation corpus JSONL")
    parser.add_argument("--classes", type=int, help="Number of classes C")
    parser.add_argument("--embeddings", help="word2vec text embeddings")
    parser.add_argument("--epochs", type=int, help="Maximum epochs")
    parser.add_argument(
        "--patience", type=int, help="Epochs without improvement before stopping (< --epochs)"
    )
    parser.add_argument(
        "--tune-threshold", action="store_true", default=None, help="Tune the binary threshold"
    )
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    kind = None
    if args.model is not None:
        kind = parse_model_kind(args.model).value
    if args.agg is not None:
        kind = kind_for_aggregation(args.agg).value
    config = resolve_config(
        TrainRunConfig,
        args,
        {
            "model": kind,
            "train": args.train,
            "validation": args.validation,
            "num_classes": args.classes,
            "embeddings": args.embeddings,
            "training.max_epochs": args.epochs,
            "training.patience": args.patience,
            "tune_threshold": args.tune_threshold,
        },
    )
    directory = run_directory(COMMAND, config)

    train_corpus = read_corpus(config.train, config.num_classes, Split.TRAIN)
    if config.validation is not None:
        val_corpus = read_corpus(config.validation, config.num_classes, Split.VALIDATION)
    else:
        train_corpus, val_corpus = stratified_split(
            train_corpus, config.validation_fraction, config.seed
        )
    vocab, embeddings = prepare_inputs(
        [train_corpus, val_corpus],
        config.architecture.embedding_dim,
        config.embeddings,
        config.seed,
    )
    spec = make_spec(config.model, config.num_classes, vocab, config.architecture, config.training)
    trained = train_model(
        spec,
        train_corpus,
        val_corpus,
        vocab,
        embeddings,
        config.training,
        log_path=directory / LOG_FILE,
        tune_threshold=config.tune_threshold,
    )

    outputs = save_model(trained.model, vocab, directory / MODEL_DIR)
    outputs.append(directory / LOG_FILE)
    result = trained.result
    summary = {
        "model": spec.kind.value,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "epochs_run": len(result.log),
        "stopped_early": result.stopped_early,
        "decision_threshold": trained.model.spec.decision_threshold,
    }
    outputs.append(atomic_write_json(directory / "result.json", summary))
    write_manifest(directory, COMMAND, config, outputs)
    return 0
