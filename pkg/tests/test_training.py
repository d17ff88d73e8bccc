"""
Tests for the training loop, early stopping, data splitting and threshold
tuning.
"""

import numpy as np
import pytest

from app.core.errors import DegenerateDataError, TrainingDivergedError
from app.diffcore import ops
from app.diffcore.tensor import ModelParams, Tensor
from app.models.corpus import Corpus
from app.models.spec import ModelKind, TrainConfig
from app.services.evaluation import prf_weighted
from app.services.training import (
    nll_loss,
    stratified_split,
    train,
    train_model,
    tune_decision_threshold,
)

from .conftest import make_review, small_spec


class ScalarModel:
    """Every review gets softmax([w, 0]); training on class 1 pushes w up."""

    def __init__(self, diverge: bool = False):
        self.spec = None
        self.params = ModelParams()
        self.params.add("w", np.zeros(1))
        self.diverge = diverge

    def forward_batch(self, reviews, training=False, rng=None):
        if self.diverge and training:
            ops.log(Tensor([0.0]))
        logits = ops.concat([self.params["w"], Tensor(np.zeros(1))], axis=0)
        return ops.softmax(ops.add(Tensor(np.zeros((len(reviews), 2))), logits))

    def l2_penalty(self):
        return ops.sum(ops.mul(self.params["w"], self.params["w"]))

    def predict_many(self, reviews):
        return []


def _corpus(labels, weights=None):
    weights = weights or [1.0] * len(labels)
    reviews = tuple(
        make_review(f"r{i}", label, ["word"], weight=weight)
        for i, (label, weight) in enumerate(zip(labels, weights, strict=True))
    )
    return Corpus(reviews=reviews, num_classes=2)


def _fast_config(**updates):
    values = dict(
        max_epochs=4, patience=1, batch_size=3, learning_rate=1.0, dropout=0.0, seed=5
    )
    values.update(updates)
    return TrainConfig(**values)


class TestTrainConfig:
    def test_short_runs_shrink_default_patience(self):
        assert TrainConfig(max_epochs=5).patience == 4
        assert TrainConfig(max_epochs=1).patience == 0
        assert TrainConfig(max_epochs=30).patience == 10
        assert TrainConfig().patience == 10

    def test_explicit_patience_is_checked(self):
        assert TrainConfig(max_epochs=5, patience=2).patience == 2
        with pytest.raises(ValueError, match="patience"):
            TrainConfig(max_epochs=5, patience=5)


class TestLoss:
    def test_weighted_nll(self):
        probs = Tensor([[0.8, 0.2], [0.4, 0.6]])
        loss = nll_loss(probs, np.array([0, 1]), np.array([1.0, 3.0]))
        expected = -(np.log(0.8) + 3 * np.log(0.6)) / 4
        assert loss.item() == pytest.approx(expected, abs=1e-12)

    def test_l2_penalty_is_added(self):
        probs = Tensor([[0.5, 0.5]])
        loss = nll_loss(
            probs, np.array([0]), np.array([1.0]), l2=0.1, penalty=Tensor(np.array(4.0))
        )
        assert loss.item() == pytest.approx(np.log(2) + 0.4)

    def test_zero_weights_are_degenerate(self):
        with pytest.raises(DegenerateDataError):
            nll_loss(Tensor([[0.5, 0.5]]), np.array([0]), np.array([0.0]))


class TestTrainLoop:
    def test_early_stopping_restores_best_parameters(self):
        model = ScalarModel()
        result = train(model, _corpus([1] * 6), _corpus([2] * 3), _fast_config(max_epochs=10))
        assert result.best_epoch == 1
        assert result.stopped_early
        assert len(result.log) == 3
        assert [entry.improved for entry in result.log] == [True, False, False]
        np.testing.assert_array_equal(model.params["w"].values, result.snapshot["w"])
        assert result.log[0].val_loss == pytest.approx(result.best_val_loss)

    def test_runs_all_epochs_while_improving(self):
        model = ScalarModel()
        result = train(model, _corpus([1] * 6), _corpus([1] * 3), _fast_config())
        assert not result.stopped_early
        assert len(result.log) == 4
        assert result.best_epoch == 4
        assert model.params["w"].values[0] > 0

    def test_non_finite_loss_raises(self):
        with pytest.raises(TrainingDivergedError, match="epoch 1"):
            train(ScalarModel(diverge=True), _corpus([1, 2]), _corpus([1]), _fast_config())

    def test_empty_validation_is_degenerate(self):
        empty = Corpus(reviews=(), num_classes=2)
        with pytest.raises(DegenerateDataError):
            train(ScalarModel(), _corpus([1, 2]), empty, _fast_config())

    def test_training_log_is_written(self, tmp_path):
        path = tmp_path / "train_log.jsonl"
        train(ScalarModel(), _corpus([1, 2, 1]), _corpus([1]), _fast_config(), log_path=path)
        assert len(path.read_text().splitlines()) == 4

    def test_same_seed_gives_identical_runs(self, tiny_corpus, tiny_vocab, tiny_embeddings):
        spec = small_spec(ModelKind.MIL_SIGMOID, tiny_vocab, dropout=0.3)
        config = _fast_config(max_epochs=2, dropout=0.3)
        first = train_model(spec, tiny_corpus, tiny_corpus, tiny_vocab, tiny_embeddings, config)
        second = train_model(spec, tiny_corpus, tiny_corpus, tiny_vocab, tiny_embeddings, config)
        assert first.result.log == second.result.log
        for name in first.model.params.names():
            np.testing.assert_array_equal(
                first.model.params[name].values, second.model.params[name].values
            )


class TestTrainModel:
    @pytest.mark.parametrize("kind", [kind for kind in ModelKind if not kind.is_keyword])
    def test_every_kind_trains(self, kind, tiny_corpus, tiny_vocab, tiny_embeddings, tmp_path):
        spec = small_spec(kind, tiny_vocab)
        trained = train_model(
            spec,
            tiny_corpus,
            tiny_corpus,
            tiny_vocab,
            tiny_embeddings,
            _fast_config(max_epochs=2),
            log_path=tmp_path / "log.jsonl",
        )
        assert trained.result.log
        assert (tmp_path / "log.jsonl").exists()
        predictions = trained.model.predict_many(tiny_corpus.reviews)
        assert len(predictions) == len(tiny_corpus)
        for prediction, review in zip(predictions, tiny_corpus.reviews, strict=True):
            assert prediction.segment_probs.shape == (review.num_segments, 2)

    def test_threshold_tuning_sets_spec(self, tiny_corpus, tiny_vocab, tiny_embeddings):
        spec = small_spec(ModelKind.REV_LR_BOW, tiny_vocab)
        trained = train_model(
            spec,
            tiny_corpus,
            tiny_corpus,
            tiny_vocab,
            tiny_embeddings,
            _fast_config(),
            tune_threshold=True,
        )
        assert trained.model.spec.decision_threshold is not None
        assert spec.decision_threshold is None


class TestStratifiedSplit:
    def test_split_is_stratified_and_ordered(self):
        corpus = _corpus([1] * 10 + [2] * 10)
        train_part, val_part = stratified_split(corpus, 0.2, seed=1)
        assert len(val_part) == 4
        assert sorted(val_part.labels) == [1, 1, 2, 2]
        train_ids = [r.id for r in train_part.reviews]
        val_ids = [r.id for r in val_part.reviews]
        assert not set(train_ids) & set(val_ids)
        order = [r.id for r in corpus.reviews]
        assert train_ids == [i for i in order if i in set(train_ids)]
        assert val_ids == [i for i in order if i in set(val_ids)]

    def test_weight_quartiles_are_strata(self):
        weights = [0.1, 0.2, 0.3, 0.4, 1.0, 2.0, 3.0, 4.0] * 2
        corpus = _corpus([1] * 16, weights)
        _, val_part = stratified_split(corpus, 0.5, seed=0)
        held = sorted(r.sample_weight for r in val_part.reviews)
        assert len(held) == 8
        assert sum(w < 0.25 for w in held) == 2
        assert sum(w > 2.5 for w in held) == 2

    def test_too_small_to_split(self):
        with pytest.raises(DegenerateDataError):
            stratified_split(_corpus([1, 2]), 0.2, seed=0)

    def test_fraction_range(self):
        with pytest.raises(ValueError):
            stratified_split(_corpus([1, 2]), 1.0, seed=0)

    def test_same_seed_same_split(self):
        corpus = _corpus([1, 2] * 10)
        first = stratified_split(corpus, 0.3, seed=9)
        second = stratified_split(corpus, 0.3, seed=9)
        assert first[1].reviews == second[1].reviews


class TestThresholdTuning:
    def test_finds_separating_threshold(self):
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        gold = np.array([1, 2, 1, 2])
        threshold, f1 = tune_decision_threshold(scores, gold)
        assert threshold == pytest.approx(0.4)
        assert f1 == pytest.approx(1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            scores = rng.uniform(size=25)
            gold = rng.integers(1, 3, size=25)
            weights = rng.uniform(0.1, 2.0, size=25)
            _, f1 = tune_decision_threshold(scores, gold, weights)
            best = max(
                prf_weighted(np.where(scores >= t, 2, 1), gold, weights, 2).f1
                for t in np.linspace(0, 1, 2001)
            )
            assert f1 >= best - 1e-12
