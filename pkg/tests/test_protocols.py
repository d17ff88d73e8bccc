"""
Tests for the binary and three-class evaluation protocols.

A fixed-output classifier makes every metric hand-computable.
"""

import numpy as np
import pytest

from app.core.errors import ConfigError, DegenerateDataError
from app.diffcore.tensor import ModelParams
from app.models.corpus import Corpus, SyntheticSpec
from app.models.run import AvgAttention, EvalMode, EvalRunConfig
from app.models.spec import ModelKind, ModelSpec, TrainConfig
from app.providers import build_vocabulary, generate_synthetic
from app.services.baselines import KeywordModel, train_seg_lr
from app.services.milnet import ReviewPrediction
from app.services.protocols import (
    binary_labels,
    curve_csv,
    evaluate,
    run_binary,
    run_seg_lr_cv,
    run_three_class,
    segment_attention,
)

from .conftest import axis_embeddings, make_review, small_spec


class FixedModel:
    def __init__(self, kind, num_classes, predictions, threshold=None):
        self.spec = ModelSpec(
            kind=kind, num_classes=num_classes, decision_threshold=threshold
        )
        self.params = ModelParams()
        self.predictions = predictions

    def predict_many(self, reviews):
        return self.predictions[: len(reviews)]


def _prediction(probs, segment_probs, attention=None, fallback=False):
    segment_probs = np.array(segment_probs, dtype=float)
    if attention is None:
        attention = np.full(len(segment_probs), 1 / len(segment_probs))
    return ReviewPrediction(
        probs=np.array(probs, dtype=float),
        segment_probs=segment_probs,
        attention=np.array(attention, dtype=float),
        fallback=fallback,
    )


def _config(**updates):
    values = dict(model_dir="unused", test="unused", folds=3)
    values.update(updates)
    return EvalRunConfig(**values)


@pytest.fixture
def binary_case():
    corpus = Corpus(
        reviews=(
            make_review("r1", 2, ["a", "b"], [2, 1]),
            make_review("r2", 1, ["c"], [1]),
            make_review("r3", 2, ["d", "e"], [1, 2]),
            make_review("r4", 1, ["f", "g"], [1, 1]),
        ),
        num_classes=2,
    )
    predictions = [
        _prediction([0.2, 0.8], [[0.1, 0.9], [0.8, 0.2]], [0.9, 0.1]),
        _prediction([0.7, 0.3], [[0.6, 0.4]], [1.0]),
        _prediction([0.6, 0.4], [[0.7, 0.3], [0.45, 0.55]], [0.2, 0.8]),
        _prediction([0.4, 0.6], [[0.3, 0.7], [0.9, 0.1]], [0.05, 0.95], fallback=True),
    ]
    return corpus, predictions


class TestSegmentAttention:
    def test_rules_per_kind(self):
        prediction = _prediction([0.5, 0.5], [[0.5, 0.5]] * 4)
        mil_avg = ModelSpec(kind=ModelKind.MIL_AVG, num_classes=2)
        rev_cnn = ModelSpec(kind=ModelKind.REV_CNN, num_classes=2)
        np.testing.assert_allclose(
            segment_attention(mil_avg, prediction, AvgAttention.INVERSE_M), np.full(4, 0.25)
        )
        np.testing.assert_array_equal(
            segment_attention(mil_avg, prediction, AvgAttention.ONE), np.ones(4)
        )
        np.testing.assert_array_equal(
            segment_attention(rev_cnn, prediction, AvgAttention.INVERSE_M), np.ones(4)
        )

    def test_binary_labels(self):
        probs = np.array([[0.6, 0.4], [0.3, 0.7]])
        np.testing.assert_array_equal(binary_labels(probs, 2, None), [0, 1])
        np.testing.assert_array_equal(binary_labels(probs, 2, 0.35), [1, 1])
        np.testing.assert_array_equal(binary_labels(probs, 1, None), [1, 0])


class TestBinaryProtocol:
    def test_review_and_segment_metrics(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions)
        result = run_binary(model, corpus, _config())

        assert result.review.precision == pytest.approx(0.5)
        assert result.review.recall == pytest.approx(0.5)
        assert result.review.aupr == pytest.approx(0.5 + 0.5 * 2 / 3)
        assert result.segment.f1 == pytest.approx(0.8)
        # Attention gating ranks both sick segments first.
        assert result.segment.aupr == pytest.approx(1.0)
        assert result.fallbacks == 1

    def test_without_attention_ranking_uses_probabilities(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.REV_CNN, 2, predictions)
        result = run_binary(model, corpus, _config())
        assert result.segment.aupr == pytest.approx(0.5 + 0.5 * 2 / 3)

    def test_decision_threshold(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions, threshold=0.35)
        result = run_binary(model, corpus, _config())
        assert result.review.precision == pytest.approx(2 / 3)
        assert result.review.recall == pytest.approx(1.0)

    def test_bootstrap_intervals(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions)
        config = _config(bootstrap=True, bootstrap_iterations=200, resample_size=20)
        result = run_binary(model, corpus, config)
        assert 0.0 <= result.review.f1_ci.low <= result.review.f1_ci.high <= 1.0
        assert result.segment.aupr_ci is not None

    def test_curves(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions)
        result = run_binary(model, corpus, _config(pr_curve=True))
        assert set(result.curves) == {"review", "segment"}
        text = curve_csv(result.curves["review"])
        lines = text.splitlines()
        assert lines[0] == "threshold,precision,recall"
        assert lines[1] == "0.8,1.0,0.5"

    def test_positive_class_out_of_range(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions)
        with pytest.raises(ConfigError):
            run_binary(model, corpus, _config(positive_class=3))

    def test_missing_gold_skips_segment_level(self):
        corpus = Corpus(
            reviews=(make_review("a", 2, ["x"]), make_review("b", 1, ["y"])), num_classes=2
        )
        predictions = [_prediction([0.1, 0.9], [[0.1, 0.9]]), _prediction([0.9, 0.1], [[0.9, 0.1]])]
        result = run_binary(FixedModel(ModelKind.MIL_SOFTMAX, 2, predictions), corpus, _config())
        assert result.segment is None
        assert result.review.f1 == pytest.approx(1.0)


class TestThreeClassProtocol:
    def _corpus_and_predictions(self, num_classes, gold_labels):
        reviews, predictions = [], []
        for i, gold in enumerate(gold_labels):
            reviews.append(make_review(f"r{i}", gold, ["w"], [gold]))
            onehot = np.eye(num_classes)[gold - 1]
            predictions.append(_prediction(onehot, [onehot], [1.0]))
        return Corpus(reviews=tuple(reviews), num_classes=num_classes), predictions

    def test_separable_polarity_gold(self):
        corpus, predictions = self._corpus_and_predictions(3, [1, 2, 3] * 10)
        model = FixedModel(ModelKind.REV_CNN, 3, predictions)
        report, review, fallbacks = run_three_class(model, corpus, _config())
        assert report.mean_macro_f1 == pytest.approx(1.0)
        assert report.polarity_weights == [-1.0, 0.0, 1.0]
        assert len(report.folds) == 3
        assert review.macro_f1 == pytest.approx(1.0)
        assert fallbacks == 0

    def test_class_labels_mapped_to_polarity(self):
        corpus, predictions = self._corpus_and_predictions(5, [1, 2, 3, 4, 5] * 6)
        model = FixedModel(ModelKind.REV_CNN, 5, predictions)
        report, _, _ = run_three_class(model, corpus, _config(gold_polarity=False))
        assert report.mean_macro_f1 == pytest.approx(1.0)
        for fold in report.folds:
            assert -0.5 < fold.t1 <= 0.0 <= fold.t2 < 0.5

    def test_requires_gold(self):
        corpus = Corpus(reviews=(make_review("a", 1, ["x"]),), num_classes=3)
        model = FixedModel(ModelKind.REV_CNN, 3, [_prediction([1, 0, 0], [[1, 0, 0]])])
        with pytest.raises(DegenerateDataError):
            run_three_class(model, corpus, _config())


class TestEvaluate:
    def test_report_for_each_mode(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions)
        report, curves = evaluate(model, corpus, _config())
        assert report.mode == "binary"
        assert report.model == "mil-sigmoid"
        assert report.aggregation_fallbacks == 1
        assert curves == {}

    def test_three_class_report(self):
        reviews = tuple(make_review(f"r{i}", 1 + i % 3, ["w"], [1 + i % 3]) for i in range(9))
        corpus = Corpus(reviews=reviews, num_classes=3)
        predictions = [
            _prediction(np.eye(3)[i % 3], [np.eye(3)[i % 3]], [1.0]) for i in range(9)
        ]
        model = FixedModel(ModelKind.MIL_SOFTMAX, 3, predictions)
        report, _ = evaluate(model, corpus, _config(mode=EvalMode.THREE_CLASS))
        assert report.three_class is not None
        assert report.segment is None

    def test_class_count_mismatch(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 3, predictions)
        with pytest.raises(ConfigError):
            evaluate(model, corpus, _config())


class TestEvalRunConfig:
    def test_needs_exactly_one_model_source(self):
        with pytest.raises(ValueError, match="exactly one"):
            EvalRunConfig(test="unused")
        with pytest.raises(ValueError, match="exactly one"):
            EvalRunConfig(test="unused", model_dir="m", baseline=ModelKind.KWRD1)

    def test_baseline_must_be_a_keyword_rule(self):
        assert _config(model_dir=None, baseline=ModelKind.KWRD2).baseline is ModelKind.KWRD2
        with pytest.raises(ValueError, match="kwrd1 or kwrd2"):
            _config(model_dir=None, baseline=ModelKind.REV_CNN)

    def test_cross_validation_needs_a_saved_model(self):
        with pytest.raises(ValueError, match="cv_folds"):
            _config(model_dir=None, baseline=ModelKind.KWRD1, cv_folds=5)


class TestKeywordBaseline:
    def test_binary_report(self):
        corpus = Corpus(
            reviews=(
                make_review("r1", 2, ["got food poisoning", "nice staff"], [2, 1]),
                make_review("r2", 1, ["lovely place"], [1]),
                make_review("r3", 2, ["felt sick all night"], [2]),
                make_review("r4", 1, ["good food"], [1]),
            ),
            num_classes=2,
        )
        config = _config(model_dir=None, baseline=ModelKind.KWRD1)
        report, _ = evaluate(KeywordModel.for_kind(ModelKind.KWRD1), corpus, config)
        assert report.model == "kwrd1"
        assert report.review.precision == pytest.approx(1.0)
        assert report.review.recall == pytest.approx(0.5)
        assert report.segment.recall == pytest.approx(0.5)

        kwrd2 = KeywordModel.for_kind(ModelKind.KWRD2)
        report, _ = evaluate(kwrd2, corpus, _config(model_dir=None, baseline=ModelKind.KWRD2))
        assert report.review.f1 == pytest.approx(1.0)
        assert report.segment.f1 == pytest.approx(1.0)


class TestSegLrCrossValidation:
    @pytest.fixture
    def seg_lr_case(self):
        spec = SyntheticSpec(
            num_reviews=40, validation_reviews=0, test_reviews=0, min_segments=8, max_segments=8
        )
        corpus = generate_synthetic(spec, keep_gold=True).train
        vocab = build_vocabulary([corpus])
        model = train_seg_lr(
            small_spec(ModelKind.SEG_LR, vocab, embedding_dim=2),
            corpus,
            vocab,
            axis_embeddings(vocab),
            TrainConfig(),
        )
        return model, corpus

    def test_folds_are_reported(self, seg_lr_case):
        model, corpus = seg_lr_case
        report = run_seg_lr_cv(model, corpus, _config(cv_folds=4))
        assert report.folds == 4
        assert report.num_classes == 2
        assert len(report.fold_macro_f1) == 4
        assert report.mean_macro_f1 == pytest.approx(np.mean(report.fold_macro_f1))
        assert report.mean_macro_f1 > 0.9

    def test_evaluate_attaches_cross_validation(self, seg_lr_case):
        model, corpus = seg_lr_case
        report, _ = evaluate(model, corpus, _config(cv_folds=3))
        assert report.cross_validation is not None
        assert report.cross_validation.folds == 3
        assert report.review is not None

    def test_other_models_are_rejected(self, binary_case):
        corpus, predictions = binary_case
        model = FixedModel(ModelKind.MIL_SIGMOID, 2, predictions)
        with pytest.raises(ConfigError, match="seg-lr"):
            run_seg_lr_cv(model, corpus, _config(cv_folds=3))
