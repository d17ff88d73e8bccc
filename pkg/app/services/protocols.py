"""
Evaluation protocols run by the eval command.

three-class: segment distributions are mapped to a polarity score, gated
    by the segment's attention weight and cut into negative / neutral /
    positive by thresholds tuned with k-fold cross-validation.
binary: review-level weighted precision / recall / F1 and AUPR, and the
    same at segment level where a segment's ranking confidence is its
    positive-class probability times its attention weight.
seg-lr cross-validation: with cv_folds set, the logistic regression of a
    Seg-LR model is refit on k folds of the test segments and scored by
    held-out macro-F1.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from app.core.config import settings
from app.core.errors import ConfigError, DegenerateDataError, MetricUndefinedError
from app.core.logging import get_logger
from app.models.corpus import Corpus
from app.models.report import (
    ConfidenceInterval,
    CrossValidationReport,
    EvalReport,
    LevelMetrics,
    ThreeClassReport,
)
from app.models.run import AvgAttention, EvalMode, EvalRunConfig
from app.models.spec import ModelKind, ModelSpec
from app.services.baselines import LogRegModel, cross_validate_logreg, segment_dataset
from app.services.classifier import ReviewClassifier
from app.services.evaluation import (
    POLARITY_CLASSES,
    accuracy,
    aupr,
    bootstrap_ci,
    gate,
    macro_f1,
    polarity_labels,
    polarity_score,
    polarity_weights,
    pr_curve,
    prf_weighted,
    search_thresholds_cv,
)
from app.services.milnet import ReviewPrediction

logger = get_logger(__name__)

Curve = list[tuple[float, float, float]]


def segment_attention(
    spec: ModelSpec, prediction: ReviewPrediction, avg_attention: AvgAttention
) -> np.ndarray:
    """Attention weight per segment used for gating and ranking."""
    if not spec.kind.is_mil:
        return np.ones(len(prediction.segment_probs))
    if spec.kind is ModelKind.MIL_AVG and avg_attention is AvgAttention.ONE:
        return np.ones(len(prediction.segment_probs))
    return np.clip(prediction.attention, 0.0, 1.0)


@dataclass
class SegmentTable:
    """Flattened per-segment predictions of a corpus."""

    probs: np.ndarray
    attention: np.ndarray
    gold: np.ndarray

    def __len__(self) -> int:
        return len(self.gold)


def segment_table(
    spec: ModelSpec,
    corpus: Corpus,
    predictions: Sequence[ReviewPrediction],
    avg_attention: AvgAttention,
) -> SegmentTable:
    """
    Raises:
        DegenerateDataError: a test segment has no gold label.
    """
    if not corpus.has_gold:
        raise DegenerateDataError("segment-level evaluation needs gold labels on every segment")
    probs = np.concatenate([p.segment_probs for p in predictions])
    attention = np.concatenate([segment_attention(spec, p, avg_attention) for p in predictions])
    gold = np.array(
        [segment.gold_label for review in corpus.reviews for segment in review.segments],
        dtype=np.int64,
    )
    return SegmentTable(probs=probs, attention=attention, gold=gold)


def _macro_metrics(predicted: np.ndarray, gold: np.ndarray, classes: Sequence[int]) -> LevelMetrics:
    per_class = [prf_weighted(predicted, gold, None, label) for label in classes]
    return LevelMetrics(
        precision=float(np.mean([m.precision for m in per_class])),
        recall=float(np.mean([m.recall for m in per_class])),
        f1=macro_f1(predicted, gold, classes),
        accuracy=accuracy(predicted, gold),
        macro_f1=macro_f1(predicted, gold, classes),
    )


# Three-class protocol


def run_three_class(
    model: ReviewClassifier, corpus: Corpus, config: EvalRunConfig
) -> tuple[ThreeClassReport, LevelMetrics, int]:
    """Polarity -> gate -> cross-validated thresholds on every test segment."""
    spec = model.spec
    predictions = model.predict_many(corpus.reviews)
    table = segment_table(spec, corpus, predictions, config.avg_attention)
    weights = polarity_weights(spec.num_classes)
    gated = gate(polarity_score(table.probs, weights), table.attention)
    gold = table.gold if config.gold_polarity else polarity_labels(table.gold, spec.num_classes)

    search = search_thresholds_cv(
        gated, gold, folds=config.folds, grid_step=config.grid_step, seed=config.seed
    )
    report = ThreeClassReport(
        num_classes=spec.num_classes,
        polarity_weights=weights.tolist(),
        folds=search.folds,
        mean_macro_f1=search.mean_macro_f1,
    )
    logger.info("Three-class mean held-out macro-F1 %.4f", report.mean_macro_f1)

    review_pred = np.array([p.label for p in predictions])
    review_gold = np.array(corpus.labels)
    review = _macro_metrics(review_pred, review_gold, range(1, spec.num_classes + 1))
    fallbacks = sum(p.fallback for p in predictions)
    return report, review, fallbacks


# Binary protocol


def binary_labels(
    probs: np.ndarray, positive: int, threshold: float | None
) -> np.ndarray:
    """1 where the positive class is predicted, else 0."""
    if threshold is None:
        return (np.argmax(probs, axis=-1) + 1 == positive).astype(np.int64)
    return (probs[..., positive - 1] >= threshold).astype(np.int64)


def _interval(bounds: tuple[float, float]) -> ConfidenceInterval:
    low, high = (min(max(value, 0.0), 1.0) for value in bounds)
    return ConfidenceInterval(low=low, high=high)


@dataclass
class BinaryLevel:
    """Inputs of the binary metrics at one level."""

    predicted: np.ndarray
    gold: np.ndarray
    confidence: np.ndarray
    weights: np.ndarray | None

    def f1(self, idx: np.ndarray | slice = slice(None)) -> float:
        weights = None if self.weights is None else self.weights[idx]
        return prf_weighted(self.predicted[idx], self.gold[idx], weights, 1).f1

    def aupr(self, idx: np.ndarray | slice = slice(None)) -> float:
        weights = None if self.weights is None else self.weights[idx]
        return aupr(self.confidence[idx], self.gold[idx], weights)

    def metrics(self, config: EvalRunConfig) -> LevelMetrics:
        prf = prf_weighted(self.predicted, self.gold, self.weights, 1)
        try:
            area: float | None = self.aupr()
        except MetricUndefinedError as exc:
            logger.warning("AUPR undefined: %s", exc.message)
            area = None
        metrics = LevelMetrics(
            precision=prf.precision,
            recall=prf.recall,
            f1=prf.f1,
            accuracy=accuracy(self.predicted, self.gold, self.weights),
            aupr=area,
            zero_division=prf.zero_division,
        )
        if config.bootstrap:
            metrics.f1_ci = _interval(self._bootstrap(self.f1, config))
            if area is not None:
                metrics.aupr_ci = _interval(self._bootstrap(self.aupr, config))
        return metrics

    def _bootstrap(
        self, metric: Callable[[np.ndarray], float], config: EvalRunConfig
    ) -> tuple[float, float]:
        return bootstrap_ci(
            metric,
            len(self.gold),
            resample_size=config.resample_size,
            iterations=config.bootstrap_iterations,
            seed=config.seed,
            workers=settings.WORKERS,
        )


@dataclass
class BinaryEvaluation:
    review: LevelMetrics
    segment: LevelMetrics | None
    fallbacks: int
    curves: dict[str, Curve] = field(default_factory=dict)


def run_binary(
    model: ReviewClassifier, corpus: Corpus, config: EvalRunConfig
) -> BinaryEvaluation:
    """
    Raises:
        ConfigError: positive_class outside the model's classes.
    """
    spec = model.spec
    positive = config.positive_class
    if positive > spec.num_classes:
        raise ConfigError(f"positive_class {positive} exceeds {spec.num_classes} classes")
    predictions = model.predict_many(corpus.reviews)
    threshold = spec.decision_threshold

    review_probs = np.stack([p.probs for p in predictions])
    reviews = BinaryLevel(
        predicted=binary_labels(review_probs, positive, threshold),
        gold=(np.array(corpus.labels) == positive).astype(np.int64),
        confidence=review_probs[:, positive - 1],
        weights=np.array([review.sample_weight for review in corpus.reviews]),
    )
    result = BinaryEvaluation(
        review=reviews.metrics(config),
        segment=None,
        fallbacks=sum(p.fallback for p in predictions),
    )
    if config.pr_curve:
        result.curves["review"] = pr_curve(reviews.confidence, reviews.gold, reviews.weights)

    if corpus.has_gold:
        table = segment_table(spec, corpus, predictions, config.avg_attention)
        segments = BinaryLevel(
            predicted=binary_labels(table.probs, positive, threshold),
            gold=(table.gold == positive).astype(np.int64),
            confidence=table.probs[:, positive - 1] * table.attention,
            weights=None,
        )
        result.segment = segments.metrics(config)
        if config.pr_curve:
            result.curves["segment"] = pr_curve(segments.confidence, segments.gold)
    else:
        logger.warning("Test corpus has no gold segment labels; skipping segment metrics")
    logger.info(
        "Binary review F1 %.4f, AUPR %.4f", result.review.f1, result.review.aupr or 0.0
    )
    return result


# Seg-LR cross-validation


def run_seg_lr_cv(
    model: ReviewClassifier, corpus: Corpus, config: EvalRunConfig
) -> CrossValidationReport:
    """
    Refit the Seg-LR classifier on k folds of the test segments.

    Three-class mode uses polarity labels, binary mode the C-class gold labels.

    Raises:
        ConfigError: the model is not a seg-lr model or cv_folds is unset.
        DegenerateDataError: a test segment has no gold label.
    """
    if config.cv_folds is None:
        raise ConfigError("cv_folds is not set")
    if not isinstance(model, LogRegModel) or model.spec.kind is not ModelKind.SEG_LR:
        raise ConfigError(f"cross-validation needs a seg-lr model, not {model.spec.kind.value}")
    tokens, labels = segment_dataset(corpus)
    gold = labels + 1
    num_classes = model.spec.num_classes
    if config.mode is EvalMode.THREE_CLASS:
        if not config.gold_polarity:
            gold = polarity_labels(gold, num_classes)
        num_classes = len(POLARITY_CLASSES)
    features = model.featurizer.transform(tokens)
    result = cross_validate_logreg(
        features, gold - 1, num_classes, folds=config.cv_folds, seed=config.seed
    )
    logger.info("Seg-LR %d-fold mean macro-F1 %.4f", config.cv_folds, result.mean)
    return CrossValidationReport(
        folds=config.cv_folds,
        num_classes=num_classes,
        fold_macro_f1=result.fold_scores,
        mean_macro_f1=result.mean,
    )


def evaluate(
    model: ReviewClassifier, corpus: Corpus, config: EvalRunConfig
) -> tuple[EvalReport, dict[str, Curve]]:
    """Run the configured protocol and assemble the report."""
    if corpus.num_classes != model.spec.num_classes:
        raise ConfigError(
            f"test corpus has {corpus.num_classes} classes, model has {model.spec.num_classes}"
        )
    cross_validation = None
    if config.cv_folds is not None:
        cross_validation = run_seg_lr_cv(model, corpus, config)
    if config.mode is EvalMode.THREE_CLASS:
        three_class, review, fallbacks = run_three_class(model, corpus, config)
        report = EvalReport(
            model=model.spec.kind.value,
            mode=config.mode.value,
            review=review,
            three_class=three_class,
            cross_validation=cross_validation,
            aggregation_fallbacks=fallbacks,
        )
        return report, {}
    binary = run_binary(model, corpus, config)
    report = EvalReport(
        model=model.spec.kind.value,
        mode=config.mode.value,
        review=binary.review,
        segment=binary.segment,
        cross_validation=cross_validation,
        aggregation_fallbacks=binary.fallbacks,
    )
    if binary.fallbacks:
        logger.warning("Aggregation fell back to the plain average on %d reviews", binary.fallbacks)
    return report, binary.curves


def curve_csv(curve: Curve) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["threshold", "precision", "recall"])
    for threshold, precision, recall in curve:
        writer.writerow([repr(threshold), repr(precision), repr(recall)])
    return buffer.getvalue()
