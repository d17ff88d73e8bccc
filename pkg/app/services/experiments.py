"""
Directional experiments on synthetic corpora.

Each experiment generates a seeded corpus, trains the models it compares
with one shared architecture and TrainConfig, and reports segment-level
numbers averaged over seeds:

    compare_aggregations   segment F1 of MIL-sigmoid, MIL-softmax, MIL-avg
    multi_witness          attention on reviews with several planted witnesses
    high_witness_rate      Rev-CNN against MIL-softmax when most segments are witnesses
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from app.core.logging import get_logger
from app.models.corpus import Corpus, SyntheticSpec
from app.models.run import ArchitectureConfig
from app.models.spec import ModelKind, TrainConfig
from app.services.classifier import ReviewClassifier
from app.services.data_service import prepare_inputs, synthesize
from app.services.evaluation import prf_weighted
from app.services.model_store import make_spec
from app.services.protocols import binary_labels
from app.services.training import train_model

logger = get_logger(__name__)

SEEDS = (1, 2, 3)


def small_architecture() -> ArchitectureConfig:
    return ArchitectureConfig(
        embedding_dim=32, kernel_widths=(2, 3), feature_maps=16, gru_hidden=16, attention_dim=16
    )


def quick_training(seed: int) -> TrainConfig:
    return TrainConfig(
        max_epochs=15, patience=3, batch_size=50, learning_rate=1.0, dropout=0.2, seed=seed
    )


def aggregation_corpus(seed: int, witness_rate: float = 0.25) -> SyntheticSpec:
    return SyntheticSpec(
        num_reviews=2000,
        validation_reviews=200,
        test_reviews=500,
        num_classes=2,
        min_segments=6,
        max_segments=10,
        witness_rate=witness_rate,
        seed=seed,
    )


def segment_f1(model: ReviewClassifier, corpus: Corpus, positive: int = 2) -> float:
    """Binary F1 of the positive class over every gold-labeled test segment."""
    predictions = model.predict_many(corpus.reviews)
    probs = np.concatenate([p.segment_probs for p in predictions])
    gold = np.array(
        [segment.gold_label for review in corpus.reviews for segment in review.segments]
    )
    predicted = binary_labels(probs, positive, model.spec.decision_threshold)
    return prf_weighted(predicted, (gold == positive).astype(np.int64), None, 1).f1


@dataclass
class _Trial:
    corpus_spec: SyntheticSpec
    architecture: ArchitectureConfig
    training: TrainConfig
    test: Corpus = field(init=False)
    models: dict[ModelKind, ReviewClassifier] = field(default_factory=dict)

    def run(self, kinds: Sequence[ModelKind]) -> _Trial:
        data = synthesize(self.corpus_spec, keep_gold=False)
        self.test = data.test
        vocab, embeddings = prepare_inputs(
            [data.train], self.architecture.embedding_dim, None, self.training.seed
        )
        num_classes = self.corpus_spec.num_classes
        for kind in kinds:
            spec = make_spec(kind, num_classes, vocab, self.architecture, self.training)
            trained = train_model(
                spec, data.train, data.validation, vocab, embeddings, self.training
            )
            self.models[kind] = trained.model
        return self


@dataclass
class ExperimentResult:
    name: str
    per_seed: list[dict[str, float]] = field(default_factory=list)

    def mean(self, key: str) -> float:
        return float(np.mean([row[key] for row in self.per_seed]))

    def add(self, row: dict[str, float]) -> None:
        self.per_seed.append(row)
        logger.info("%s: %s", self.name, ", ".join(f"{k}={v:.4f}" for k, v in row.items()))


def compare_aggregations(
    seeds: Sequence[int] = SEEDS,
    architecture: ArchitectureConfig | None = None,
) -> ExperimentResult:
    """Segment F1 of the three MIL aggregations on a WR=0.25 corpus."""
    architecture = architecture or small_architecture()
    kinds = (ModelKind.MIL_SIGMOID, ModelKind.MIL_SOFTMAX, ModelKind.MIL_AVG)
    result = ExperimentResult(name="aggregation")
    for seed in seeds:
        trial = _Trial(aggregation_corpus(seed), architecture, quick_training(seed)).run(kinds)
        result.add({kind.value: segment_f1(trial.models[kind], trial.test) for kind in kinds})
    return result


def witness_attention(
    model: ReviewClassifier, corpus: Corpus, background_class: int = 1
) -> tuple[float, float]:
    """
    Over reviews of non-background classes: mean number of witness segments
    with attention above 0.5, and mean of the largest attention weight.
    """
    reviews = [review for review in corpus.reviews if review.label != background_class]
    predictions = model.predict_many(reviews)
    selected, peak = [], []
    for review, prediction in zip(reviews, predictions, strict=True):
        witnesses = np.array([s.gold_label == review.label for s in review.segments])
        selected.append(float(np.sum(prediction.attention[witnesses] > 0.5)))
        peak.append(float(np.max(prediction.attention)))
    return float(np.mean(selected)), float(np.mean(peak))


def multi_witness(
    seeds: Sequence[int] = SEEDS,
    witnesses: int = 3,
    architecture: ArchitectureConfig | None = None,
) -> ExperimentResult:
    """Attention of MIL-sigmoid and MIL-softmax on reviews with `witnesses` planted witnesses."""
    architecture = architecture or small_architecture()
    kinds = (ModelKind.MIL_SIGMOID, ModelKind.MIL_SOFTMAX)
    result = ExperimentResult(name="multi-witness")
    for seed in seeds:
        corpus_spec = aggregation_corpus(seed).model_copy(update={"fixed_witnesses": witnesses})
        trial = _Trial(corpus_spec, architecture, quick_training(seed)).run(kinds)
        sigmoid_selected, _ = witness_attention(trial.models[ModelKind.MIL_SIGMOID], trial.test)
        _, softmax_peak = witness_attention(trial.models[ModelKind.MIL_SOFTMAX], trial.test)
        result.add({"sigmoid_selected": sigmoid_selected, "softmax_peak": softmax_peak})
    return result


def high_witness_rate(
    seeds: Sequence[int] = SEEDS,
    witness_rate: float = 0.75,
    architecture: ArchitectureConfig | None = None,
) -> ExperimentResult:
    """Segment F1 of Rev-CNN applied per segment against MIL-softmax."""
    architecture = architecture or small_architecture()
    kinds = (ModelKind.REV_CNN, ModelKind.MIL_SOFTMAX)
    result = ExperimentResult(name="high-wr")
    for seed in seeds:
        corpus_spec = aggregation_corpus(seed, witness_rate)
        trial = _Trial(corpus_spec, architecture, quick_training(seed)).run(kinds)
        result.add({kind.value: segment_f1(trial.models[kind], trial.test) for kind in kinds})
    return result
