"""
Evaluation metrics.

Three-class protocol: a segment distribution p over C classes becomes a
polarity score g = sum_c p_c w_c with w_c = -1 + 2 (c - 1) / (C - 1), is
gated by its attention weight (g' = a g) and mapped to negative / neutral /
positive by two thresholds tuned with k-fold cross-validation.

Binary protocol: sample-weighted precision/recall/F1, area under the
precision-recall curve and percentile bootstrap confidence intervals.

Labels are class indices; macro-F1 counts a class with neither gold nor
predicted members as F1 = 0.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from app.core.errors import DegenerateDataError, MetricUndefinedError
from app.core.logging import get_logger
from app.models.report import ThresholdFold

logger = get_logger(__name__)

NEGATIVE, NEUTRAL, POSITIVE = 1, 2, 3
POLARITY_CLASSES = (NEGATIVE, NEUTRAL, POSITIVE)


# Polarity mapping


def polarity_weights(num_classes: int) -> np.ndarray:
    """Equally spaced weights from -1 (class 1) to 1 (class C)."""
    if num_classes < 2:
        raise ValueError("polarity weights need at least two classes")
    return -1.0 + 2.0 * np.arange(num_classes) / (num_classes - 1)


@dataclass(frozen=True)
class PolarityMap:
    num_classes: int
    t1: float = -0.1
    t2: float = 0.1

    def __post_init__(self) -> None:
        if self.t1 > self.t2:
            raise ValueError(f"thresholds out of order: t1={self.t1} > t2={self.t2}")

    @property
    def weights(self) -> np.ndarray:
        return polarity_weights(self.num_classes)

    def label(self, probs: np.ndarray, attention: np.ndarray | float = 1.0) -> np.ndarray:
        gated = gate(polarity_score(probs, self.weights), attention)
        return apply_thresholds(gated, self.t1, self.t2)


def polarity_score(probs: np.ndarray, weights: np.ndarray | PolarityMap) -> np.ndarray:
    """g = sum_c p_c w_c over the last axis."""
    w = weights.weights if isinstance(weights, PolarityMap) else weights
    return np.asarray(probs, dtype=np.float64) @ w


def gate(score: np.ndarray | float, attention: np.ndarray | float) -> np.ndarray:
    """g' = a g; never increases |g| since a is in [0, 1]."""
    alpha = np.asarray(attention, dtype=np.float64)
    if np.any(alpha < 0.0) or np.any(alpha > 1.0):
        raise ValueError("attention weights must lie in [0, 1]")
    return alpha * np.asarray(score, dtype=np.float64)


def apply_thresholds(gated: np.ndarray | float, t1: float, t2: float) -> np.ndarray:
    """Negative below t1, positive above t2, neutral otherwise (bounds included)."""
    if t1 > t2:
        raise ValueError(f"thresholds out of order: t1={t1} > t2={t2}")
    g = np.asarray(gated, dtype=np.float64)
    return np.where(g < t1, NEGATIVE, np.where(g > t2, POSITIVE, NEUTRAL))


def polarity_labels(gold: np.ndarray, num_classes: int) -> np.ndarray:
    """Map C-class labels to polarity classes by the sign of their weight."""
    signs = np.sign(polarity_weights(num_classes))[np.asarray(gold) - 1]
    return np.where(signs < 0, NEGATIVE, np.where(signs > 0, POSITIVE, NEUTRAL))


# Classification metrics


def per_class_f1(predicted: np.ndarray, gold: np.ndarray, label: int) -> float:
    tp = float(np.sum((predicted == label) & (gold == label)))
    fp = float(np.sum((predicted == label) & (gold != label)))
    fn = float(np.sum((predicted != label) & (gold == label)))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def macro_f1(
    predicted: Sequence[int] | np.ndarray,
    gold: Sequence[int] | np.ndarray,
    classes: Sequence[int],
) -> float:
    """
    Unweighted mean of per-class F1 over classes; matches
    sklearn.metrics.f1_score(gold, predicted, labels=classes, average="macro", zero_division=0).
    """
    predicted, gold = np.asarray(predicted), np.asarray(gold)
    return float(np.mean([per_class_f1(predicted, gold, label) for label in classes]))


def accuracy(
    predicted: Sequence[int] | np.ndarray,
    gold: Sequence[int] | np.ndarray,
    weights: np.ndarray | None = None,
) -> float:
    """Weighted share of correct predictions, as sklearn.metrics.accuracy_score."""
    correct = (np.asarray(predicted) == np.asarray(gold)).astype(np.float64)
    if weights is None:
        return float(correct.mean()) if correct.size else 0.0
    total = float(np.sum(weights))
    return float(np.sum(correct * weights) / total) if total > 0 else 0.0


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    zero_division: bool = False


def prf_weighted(
    predicted: Sequence[int] | np.ndarray,
    gold: Sequence[int] | np.ndarray,
    weights: np.ndarray | None,
    positive: int,
) -> PRF:
    """
    Precision, recall and F1 of the positive class from weighted counts; matches
    sklearn.metrics.precision_recall_fscore_support(gold, predicted, pos_label=positive,
    average="binary", sample_weight=weights, zero_division=0).
    """
    predicted, gold = np.asarray(predicted), np.asarray(gold)
    w = np.ones(len(gold)) if weights is None else np.asarray(weights, dtype=np.float64)
    tp = float(np.sum(w[(predicted == positive) & (gold == positive)]))
    fp = float(np.sum(w[(predicted == positive) & (gold != positive)]))
    fn = float(np.sum(w[(predicted != positive) & (gold == positive)]))

    zero_division = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, zero_division = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, zero_division = 0.0, True
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRF(precision=precision, recall=recall, f1=f1, zero_division=zero_division)


# Ranking metrics


def pr_curve(
    confidences: np.ndarray, gold: np.ndarray, weights: np.ndarray | None = None
) -> list[tuple[float, float, float]]:
    """
    (threshold, precision, recall) at every distinct confidence, from the
    highest down; tied confidences enter the ranking together.
    These are the points of sklearn.metrics.precision_recall_curve without
    its appended (precision 1, recall 0) endpoint.

    Raises:
        MetricUndefinedError: gold holds only one class.
    """
    scores = np.asarray(confidences, dtype=np.float64)
    positive = np.asarray(gold, dtype=bool)
    w = np.ones(len(scores)) if weights is None else np.asarray(weights, dtype=np.float64)
    total_positive = float(np.sum(w[positive]))
    if total_positive <= 0 or float(np.sum(w[~positive])) <= 0:
        raise MetricUndefinedError("precision-recall curve needs both positive and negative items")

    order = np.argsort(-scores, kind="stable")
    scores, positive, w = scores[order], positive[order], w[order]
    tp = np.cumsum(w * positive)
    fp = np.cumsum(w * ~positive)
    # Last index of each run of equal scores.
    cuts = np.flatnonzero(np.append(np.diff(scores) != 0, True))
    points = []
    for cut in cuts:
        predicted = tp[cut] + fp[cut]
        precision = tp[cut] / predicted if predicted > 0 else 0.0
        points.append((float(scores[cut]), float(precision), float(tp[cut] / total_positive)))
    return points


def aupr(
    confidences: np.ndarray, gold: np.ndarray, weights: np.ndarray | None = None
) -> float:
    """
    Step-wise area under the precision-recall curve, sum (R_k - R_k-1) P_k;
    matches sklearn.metrics.average_precision_score(gold, confidences, sample_weight=weights).
    """
    area = 0.0
    previous_recall = 0.0
    for _, precision, recall in pr_curve(confidences, gold, weights):
        area += (recall - previous_recall) * precision
        previous_recall = recall
    return float(area)


# Bootstrap


def bootstrap_ci(
    metric: Callable[[np.ndarray], float],
    num_items: int,
    resample_size: int = 1000,
    iterations: int = 1000,
    seed: int = 0,
    workers: int = 1,
    max_retries: int = 100,
    confidence: float = 0.95,
) -> tuple[float, float]:
    """
    Percentile bootstrap interval of metric(indices) over resamples drawn
    with replacement from range(num_items).

    Each iteration owns a child seed, so results do not depend on the
    number of workers. A resample on which the metric is undefined is
    redrawn from the same child stream, at most max_retries times.

    Raises:
        ValueError: fewer than 200 iterations.
        MetricUndefinedError: retries exhausted.
    """
    if iterations < 200:
        raise ValueError("bootstrap needs at least 200 iterations")
    if num_items < 1:
        raise MetricUndefinedError("cannot bootstrap an empty test set")
    children = np.random.SeedSequence(seed).spawn(iterations)

    def one(child: np.random.SeedSequence) -> tuple[float, int]:
        rng = np.random.default_rng(child)
        for attempt in range(max_retries + 1):
            sample = rng.integers(0, num_items, size=resample_size)
            try:
                return metric(sample), attempt
            except MetricUndefinedError:
                continue
        raise MetricUndefinedError(f"metric undefined on {max_retries + 1} consecutive resamples")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, children))
    else:
        results = [one(child) for child in children]

    retries = sum(attempts for _, attempts in results)
    if retries:
        logger.warning("Bootstrap redrew %d undefined resamples", retries)
    tail = (1.0 - confidence) / 2 * 100
    low, high = np.percentile([value for value, _ in results], [tail, 100 - tail])
    return float(low), float(high)


# Threshold search


def threshold_grid(step: float = 0.05) -> np.ndarray:
    """Grid over [-1, 1] including both ends."""
    count = int(round(2.0 / step)) + 1
    return np.round(np.linspace(-1.0, 1.0, count), 10)


def best_thresholds(
    gated: np.ndarray, gold: np.ndarray, grid: np.ndarray
) -> tuple[float, float, float]:
    """
    Exhaustive search for t1 <= t2 on the grid maximizing macro-F1.

    Ties go to the smallest |t1| + |t2|, then to the smallest (t1, t2).
    """
    best: tuple[float, float, float, float] | None = None
    for i, t1 in enumerate(grid):
        for t2 in grid[i:]:
            score = macro_f1(apply_thresholds(gated, t1, t2), gold, POLARITY_CLASSES)
            key = (-score, abs(t1) + abs(t2), t1, t2)
            if best is None or _better(key, best):
                best = key
    assert best is not None
    return float(best[2]), float(best[3]), -best[0]


def _better(key: tuple[float, ...], best: tuple[float, ...]) -> bool:
    if abs(key[0] - best[0]) > 1e-12:
        return key[0] < best[0]
    if abs(key[1] - best[1]) > 1e-12:
        return key[1] < best[1]
    return key[2:] < best[2:]


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold index per item: a seeded shuffle cut into near-equal folds."""
    if n < folds:
        raise DegenerateDataError(f"{n} items cannot fill {folds} folds")
    assignment = np.empty(n, dtype=np.int64)
    order = np.random.default_rng(seed).permutation(n)
    for fold, members in enumerate(np.array_split(order, folds)):
        assignment[members] = fold
    return assignment


@dataclass
class ThresholdSearch:
    folds: list[ThresholdFold]

    @property
    def mean_macro_f1(self) -> float:
        return float(np.mean([fold.test_macro_f1 for fold in self.folds]))


def search_thresholds_cv(
    gated: np.ndarray,
    gold: np.ndarray,
    folds: int = 10,
    grid_step: float = 0.05,
    seed: int = 0,
    assignment: np.ndarray | None = None,
) -> ThresholdSearch:
    """
    Tune (t1, t2) on k - 1 folds and score the held-out fold, for every fold.

    gold holds polarity classes (1 negative, 2 neutral, 3 positive).

    Raises:
        MetricUndefinedError: a fold is empty.
    """
    gated, gold = np.asarray(gated, dtype=np.float64), np.asarray(gold)
    if assignment is None:
        if len(gated) < folds:
            raise MetricUndefinedError(f"{len(gated)} segments leave a fold empty")
        assignment = fold_assignment(len(gated), folds, seed)
    grid = threshold_grid(grid_step)

    results = []
    for fold in range(folds):
        held_out = assignment == fold
        if not held_out.any() or held_out.all():
            raise MetricUndefinedError(f"fold {fold} is empty")
        t1, t2, train_score = best_thresholds(gated[~held_out], gold[~held_out], grid)
        predicted = apply_thresholds(gated[held_out], t1, t2)
        test_score = macro_f1(predicted, gold[held_out], POLARITY_CLASSES)
        results.append(
            ThresholdFold(
                fold=fold, t1=t1, t2=t2, train_macro_f1=train_score, test_macro_f1=test_score
            )
        )
        logger.info("Fold %d: t1=%.2f t2=%.2f held-out macro-F1 %.4f", fold, t1, t2, test_score)
    return ThresholdSearch(folds=results)
