"""
Training: loss, the epoch loop with validation early stopping, and the
per-kind entry point used by the CLI.

Neural models are trained with mini-batch Adadelta. After every epoch the
validation loss is computed in evaluation mode; the parameters with the
lowest validation loss are kept, and training stops once the loss has not
improved for more than `patience` epochs in a row.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.core.errors import DegenerateDataError, NumericalError, TrainingDivergedError
from app.core.files import atomic_write_jsonl
from app.core.logging import get_logger
from app.diffcore import ops
from app.diffcore.optim import AdadeltaState, adadelta_step
from app.diffcore.tape import Tape, backward, no_recording
from app.diffcore.tensor import Tensor
from app.models.corpus import Corpus, Review, Split
from app.models.report import EpochLog
from app.models.spec import ModelKind, ModelSpec, TrainConfig
from app.providers.vocabulary import Vocabulary
from app.services import baselines
from app.services.batching import make_batches, targets
from app.services.classifier import ReviewClassifier, TrainableModel
from app.services.evaluation import macro_f1, prf_weighted
from app.services.model_store import build_model

logger = get_logger(__name__)

WEIGHT_STRATA = 4


def nll_loss(
    probs: Tensor,
    labels: np.ndarray,
    weights: np.ndarray,
    l2: float = 0.0,
    penalty: Tensor | None = None,
) -> Tensor:
    """
    -sum_r w_r ln p_r[y_r] / sum_r w_r, plus l2 * penalty.

    Raises:
        DegenerateDataError: the sample weights sum to zero.
    """
    total = float(np.sum(weights))
    if total <= 0:
        raise DegenerateDataError("sample weights sum to zero")
    picked = ops.log(ops.pick(probs, labels))
    loss = ops.scale(ops.sum(ops.mul(picked, np.asarray(weights, dtype=np.float64))), -1 / total)
    if penalty is not None and l2 > 0:
        loss = loss + ops.scale(penalty, l2)
    return loss


@dataclass
class TrainingResult:
    best_epoch: int
    best_val_loss: float
    log: list[EpochLog] = field(default_factory=list)
    snapshot: dict[str, np.ndarray] = field(default_factory=dict)
    stopped_early: bool = False


@dataclass
class _Evaluation:
    loss: float
    macro_f1: float


def _evaluate(
    model: TrainableModel, reviews: Sequence[Review], num_classes: int, batch_size: int
) -> _Evaluation:
    weighted_nll = 0.0
    total_weight = 0.0
    predicted: list[int] = []
    with no_recording():
        for start in range(0, len(reviews), batch_size):
            chunk = reviews[start : start + batch_size]
            labels, weights = targets(chunk)
            probs = model.forward_batch(chunk, training=False).values
            picked = probs[np.arange(len(chunk)), labels]
            weighted_nll -= float(np.sum(weights * np.log(picked)))
            total_weight += float(np.sum(weights))
            predicted.extend((np.argmax(probs, axis=1) + 1).tolist())
    if total_weight <= 0:
        raise DegenerateDataError("validation sample weights sum to zero")
    gold = [review.label for review in reviews]
    score = macro_f1(predicted, gold, range(1, num_classes + 1))
    return _Evaluation(loss=weighted_nll / total_weight, macro_f1=score)


def train(
    model: TrainableModel,
    train_corpus: Corpus,
    val_corpus: Corpus,
    config: TrainConfig,
    log_path: str | Path | None = None,
) -> TrainingResult:
    """
    Train model in place and leave it holding the best-validation parameters.

    Raises:
        TrainingDivergedError: the loss stopped being finite.
        DegenerateDataError: empty splits or zero validation weight.
    """
    if not len(train_corpus) or not len(val_corpus):
        raise DegenerateDataError("training and validation corpora must be non-empty")
    if train_corpus.num_classes != val_corpus.num_classes:
        raise DegenerateDataError("training and validation corpora disagree on C")

    rng = np.random.default_rng(config.seed)
    state = AdadeltaState.for_params(
        model.params,
        rho=config.rho,
        epsilon=config.epsilon,
        learning_rate=config.learning_rate,
        clip_norm=config.clip_norm,
    )
    result = TrainingResult(best_epoch=0, best_val_loss=float("inf"))
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        plan = make_batches(train_corpus, config.batch_size, rng)
        epoch_loss = 0.0
        epoch_weight = 0.0
        for number, indices in enumerate(plan):
            reviews = [train_corpus.reviews[i] for i in indices]
            labels, weights = targets(reviews)
            if float(np.sum(weights)) <= 0:
                continue
            try:
                with Tape(watch=model.params) as tape:
                    probs = model.forward_batch(reviews, training=True, rng=rng)
                    loss = nll_loss(probs, labels, weights, config.l2, model.l2_penalty())
                grads = backward(tape, loss)
            except NumericalError as exc:
                raise TrainingDivergedError(
                    f"epoch {epoch}, batch {number}: {exc.message}"
                ) from exc
            adadelta_step(model.params, grads, state)
            epoch_loss += loss.item() * float(np.sum(weights))
            epoch_weight += float(np.sum(weights))

        try:
            validation = _evaluate(
                model, val_corpus.reviews, val_corpus.num_classes, config.batch_size
            )
        except NumericalError as exc:
            raise TrainingDivergedError(f"epoch {epoch} validation: {exc.message}") from exc
        if not np.isfinite(validation.loss):
            raise TrainingDivergedError(f"epoch {epoch}: validation loss is not finite")

        improved = validation.loss < result.best_val_loss
        if improved:
            result.best_epoch = epoch
            result.best_val_loss = validation.loss
            result.snapshot = model.params.snapshot()
            stale = 0
        else:
            stale += 1
        entry = EpochLog(
            epoch=epoch,
            train_loss=epoch_loss / epoch_weight if epoch_weight else 0.0,
            val_loss=validation.loss,
            val_macro_f1=validation.macro_f1,
            improved=improved,
        )
        result.log.append(entry)
        logger.info(
            "Epoch %d: train loss %.5f, val loss %.5f, val macro-F1 %.4f%s",
            epoch,
            entry.train_loss,
            entry.val_loss,
            entry.val_macro_f1,
            " (best)" if improved else "",
        )
        if stale > config.patience:
            result.stopped_early = True
            logger.info(
                "Early stopping after epoch %d; best epoch %d", epoch, result.best_epoch
            )
            break

    model.params.restore(result.snapshot)
    if log_path is not None:
        write_training_log(result.log, log_path)
    return result


def write_training_log(log: list[EpochLog], path: str | Path) -> Path:
    return atomic_write_jsonl(path, [entry.model_dump() for entry in log])


# Data splitting and post-hoc tuning


def stratified_split(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """
    Hold out `fraction` of each (label, sample-weight quartile) stratum as
    validation. Both parts keep file order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("validation fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    weights = np.array([review.sample_weight for review in corpus.reviews])
    if np.unique(weights).size > 1:
        edges = np.quantile(weights, np.linspace(0, 1, WEIGHT_STRATA + 1)[1:-1])
        bins = np.searchsorted(edges, weights, side="right")
    else:
        bins = np.zeros(len(weights), dtype=np.int64)

    strata: dict[tuple[int, int], list[int]] = {}
    for i, review in enumerate(corpus.reviews):
        strata.setdefault((review.label, int(bins[i])), []).append(i)

    held_out: list[int] = []
    for key in sorted(strata):
        members = strata[key]
        count = int(round(fraction * len(members)))
        held_out.extend(rng.permutation(members)[:count].tolist())
    if not held_out or len(held_out) == len(corpus):
        raise DegenerateDataError(
            f"cannot split {len(corpus)} reviews with validation fraction {fraction}"
        )
    held = set(held_out)
    train_idx = [i for i in range(len(corpus)) if i not in held]
    return (
        corpus.subset(train_idx, Split.TRAIN),
        corpus.subset(sorted(held), Split.VALIDATION),
    )


def tune_decision_threshold(
    scores: np.ndarray,
    gold: np.ndarray,
    weights: np.ndarray | None = None,
    positive: int = 2,
    negative: int = 1,
) -> tuple[float, float]:
    """
    Positive-class probability threshold maximizing weighted F1.

    Candidates are the observed scores (predict positive when score >= t);
    ties go to the threshold closest to 0.5. Returns (threshold, F1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    gold = np.asarray(gold)
    best_threshold, best_f1 = 0.5, -1.0
    for threshold in np.unique(scores):
        predicted = np.where(scores >= threshold, positive, negative)
        f1 = prf_weighted(predicted, gold, weights, positive).f1
        closer = abs(threshold - 0.5) < abs(best_threshold - 0.5)
        if f1 > best_f1 + 1e-12 or (abs(f1 - best_f1) <= 1e-12 and closer):
            best_threshold, best_f1 = float(threshold), f1
    return best_threshold, max(best_f1, 0.0)


# Entry point for every model kind


@dataclass
class TrainedModel:
    model: ReviewClassifier
    result: TrainingResult


def _logreg_result(
    model: baselines.LogRegModel, val_corpus: Corpus, num_classes: int
) -> TrainingResult:
    predictions = model.predict_many(val_corpus.reviews)
    labels, weights = targets(val_corpus.reviews)
    probs = np.stack([p.probs for p in predictions])
    loss = float(-np.sum(weights * np.log(probs[np.arange(len(labels)), labels])) / weights.sum())
    score = macro_f1([p.label for p in predictions], labels + 1, range(1, num_classes + 1))
    entry = EpochLog(epoch=1, train_loss=0.0, val_loss=loss, val_macro_f1=score, improved=True)
    return TrainingResult(
        best_epoch=1, best_val_loss=loss, log=[entry], snapshot=model.params.snapshot()
    )


def train_model(
    spec: ModelSpec,
    train_corpus: Corpus,
    val_corpus: Corpus,
    vocab: Vocabulary,
    embeddings: np.ndarray,
    config: TrainConfig,
    log_path: str | Path | None = None,
    tune_threshold: bool = False,
) -> TrainedModel:
    """Build and train the model named by spec.kind."""
    logger.info("Training %s on %d reviews", spec.kind.value, len(train_corpus))
    if spec.kind.is_logreg:
        if spec.kind is ModelKind.REV_LR_EMB:
            logreg = baselines.train_rev_lr_emb(spec, train_corpus, vocab, embeddings, config)
        elif spec.kind is ModelKind.REV_LR_BOW:
            logreg = baselines.train_rev_lr_bow(spec, train_corpus, vocab, config)
        else:
            logreg = baselines.train_seg_lr(spec, train_corpus, vocab, embeddings, config)
        result = _logreg_result(logreg, val_corpus, spec.num_classes)
        if log_path is not None:
            write_training_log(result.log, log_path)
        trained = TrainedModel(model=logreg, result=result)
    else:
        neural = build_model(spec, vocab, embeddings, config.seed)
        result = train(neural, train_corpus, val_corpus, config, log_path)
        trained = TrainedModel(model=neural, result=result)

    if tune_threshold and spec.num_classes == 2:
        predictions = trained.model.predict_many(val_corpus.reviews)
        scores = np.array([p.probs[1] for p in predictions])
        labels, weights = targets(val_corpus.reviews)
        threshold, f1 = tune_decision_threshold(scores, labels + 1, weights)
        trained.model.spec = trained.model.spec.model_copy(
            update={"decision_threshold": threshold}
        )
        logger.info("Tuned decision threshold %.4f (validation F1 %.4f)", threshold, f1)
    return trained
