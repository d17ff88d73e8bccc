"""
Model construction and the on-disk model directory.

A model directory holds:

    params.ckpt   every parameter, diffcore checkpoint format
    spec.json     the ModelSpec
    vocab.json    the vocabulary the token ids refer to
    tfidf.json    fitted TF-IDF terms and idf (rev-lr-bow only)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.core.errors import CheckpointError, CorpusFormatError
from app.core.files import atomic_write_json
from app.core.logging import get_logger
from app.diffcore.checkpoint import load_params, save_params
from app.diffcore.tensor import ModelParams
from app.models.run import ArchitectureConfig
from app.models.spec import ModelKind, ModelSpec, TrainConfig
from app.providers.vocabulary import Vocabulary
from app.services import encoders
from app.services.baselines import (
    EmbeddingFeatures,
    LogRegModel,
    ReviewCnnModel,
    ReviewRnnModel,
    TfidfVectorizer,
)
from app.services.classifier import ReviewClassifier, TrainableModel
from app.services.milnet import HierarchicalModel

logger = get_logger(__name__)

PARAMS_FILE = "params.ckpt"
SPEC_FILE = "spec.json"
VOCAB_FILE = "vocab.json"
TFIDF_FILE = "tfidf.json"


def make_spec(
    kind: ModelKind,
    num_classes: int,
    vocab: Vocabulary,
    architecture: ArchitectureConfig,
    training: TrainConfig,
) -> ModelSpec:
    return ModelSpec(
        kind=kind,
        num_classes=num_classes,
        vocab_size=len(vocab),
        vocab_digest=vocab.digest(),
        dropout=training.dropout,
        **architecture.model_dump(),
    )


def build_model(
    spec: ModelSpec, vocab: Vocabulary, embeddings: np.ndarray, seed: int
) -> TrainableModel:
    """Freshly initialized neural model of kind spec.kind."""
    if spec.kind.is_mil:
        return HierarchicalModel.initialize(spec, vocab, embeddings, seed)
    if spec.kind is ModelKind.REV_CNN:
        return ReviewCnnModel.initialize(spec, vocab, embeddings, seed)
    if spec.kind is ModelKind.REV_RNN:
        return ReviewRnnModel.initialize(spec, vocab, embeddings, seed)
    raise ValueError(f"{spec.kind.value} is not trained by gradient descent")


def save_model(model: ReviewClassifier, vocab: Vocabulary, directory: str | Path) -> list[Path]:
    """Write the model directory; returns the written files."""
    directory = Path(directory)
    written = [
        save_params(model.params, directory / PARAMS_FILE),
        atomic_write_json(directory / SPEC_FILE, model.spec.model_dump(mode="json")),
        vocab.save(directory / VOCAB_FILE),
    ]
    if isinstance(model, LogRegModel) and isinstance(model.featurizer, TfidfVectorizer):
        written.append(model.featurizer.save(directory / TFIDF_FILE))
    logger.info("Saved %s model to %s", model.spec.kind.value, directory)
    return written


def load_spec(directory: str | Path) -> ModelSpec:
    path = Path(directory) / SPEC_FILE
    try:
        return ModelSpec.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    except ValidationError as exc:
        raise CheckpointError(f"invalid model spec {path}: {exc}") from exc


def _check_layout(params: ModelParams, expected: ModelParams) -> None:
    found = {param.name: param.shape for param in params}
    wanted = {param.name: param.shape for param in expected}
    if found.keys() != wanted.keys():
        missing = sorted(wanted.keys() - found.keys())
        extra = sorted(found.keys() - wanted.keys())
        raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {extra}")
    for name, shape in wanted.items():
        if found[name] != shape:
            raise CheckpointError(f"{name}: checkpoint shape {found[name]}, model expects {shape}")


def load_model(directory: str | Path) -> tuple[ReviewClassifier, Vocabulary]:
    """
    Rebuild a saved model.

    Raises:
        CheckpointError: missing files, vocabulary digest mismatch, or
            parameters that do not fit the saved spec.
    """
    directory = Path(directory)
    spec = load_spec(directory)
    try:
        vocab = Vocabulary.load(directory / VOCAB_FILE)
    except CorpusFormatError as exc:
        raise CheckpointError(f"{directory}: {exc.message}") from exc
    if spec.vocab_digest and vocab.digest() != spec.vocab_digest:
        raise CheckpointError(f"{directory}: vocabulary does not match the model spec")
    params = load_params(directory / PARAMS_FILE)

    if spec.kind.is_logreg:
        model = _load_logreg(spec, params, vocab, directory)
    else:
        table = params[encoders.EMBEDDING].numpy() if encoders.EMBEDDING in params else None
        if table is None:
            raise CheckpointError(f"{directory}: checkpoint has no embedding table")
        template = build_model(spec, vocab, table, seed=0)
        _check_layout(params, template.params)
        template.params.restore(params.snapshot())
        model = template
    logger.info("Loaded %s model from %s", spec.kind.value, directory)
    return model, vocab


def _load_logreg(
    spec: ModelSpec, params: ModelParams, vocab: Vocabulary, directory: Path
) -> LogRegModel:
    if "lr.W" not in params or "lr.b" not in params:
        raise CheckpointError(f"{directory}: checkpoint has no logistic regression weights")
    weight = params["lr.W"]
    if weight.shape != (spec.num_classes, spec.feature_dim):
        raise CheckpointError(
            f"lr.W has shape {weight.shape}, spec expects "
            f"{(spec.num_classes, spec.feature_dim)}"
        )
    featurizer: EmbeddingFeatures | TfidfVectorizer
    if spec.kind is ModelKind.REV_LR_BOW:
        try:
            featurizer = TfidfVectorizer.load(directory / TFIDF_FILE)
        except (OSError, ValueError, KeyError) as exc:
            raise CheckpointError(f"cannot read {directory / TFIDF_FILE}: {exc}") from exc
    else:
        if encoders.EMBEDDING not in params:
            raise CheckpointError(f"{directory}: checkpoint has no embedding table")
        featurizer = EmbeddingFeatures(vocab=vocab, table=params[encoders.EMBEDDING].numpy())
    return LogRegModel(spec, params, vocab, featurizer)
