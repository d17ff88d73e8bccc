"""
Directional experiments on seeded synthetic corpora.

These train several models over three seeds and take minutes; they only
run with --runslow.
"""

import pytest

from app.models.spec import ModelKind
from app.services.data_service import prepare_inputs, synthesize
from app.services.experiments import (
    aggregation_corpus,
    compare_aggregations,
    high_witness_rate,
    multi_witness,
    quick_training,
    small_architecture,
)
from app.services.model_store import make_spec
from app.services.training import train_model

pytestmark = pytest.mark.slow


def test_sigmoid_attention_finds_sparse_witnesses():
    result = compare_aggregations()
    sigmoid, softmax, avg = (
        result.mean("mil-sigmoid"), result.mean("mil-softmax"), result.mean("mil-avg")
    )
    assert sigmoid > softmax > avg
    assert sigmoid - avg >= 0.10


def test_sigmoid_selects_several_witnesses():
    result = multi_witness(witnesses=3)
    assert result.mean("sigmoid_selected") >= 2.0
    assert result.mean("softmax_peak") > 0.5


def test_review_level_cnn_competitive_at_high_witness_rate():
    result = high_witness_rate(witness_rate=0.75)
    assert abs(result.mean("rev-cnn") - result.mean("mil-softmax")) <= 0.10


def test_fully_witnessed_reviews_are_separable():
    seed = 1
    training = quick_training(seed)
    architecture = small_architecture()
    corpus_spec = aggregation_corpus(seed, witness_rate=1.0).model_copy(
        update={"num_reviews": 600, "test_reviews": 0}
    )
    data = synthesize(corpus_spec, keep_gold=False)
    vocab, embeddings = prepare_inputs([data.train], architecture.embedding_dim, None, seed)
    spec = make_spec(ModelKind.MIL_SIGMOID, 2, vocab, architecture, training)
    trained = train_model(spec, data.train, data.validation, vocab, embeddings, training)
    assert max(entry.val_macro_f1 for entry in trained.result.log) >= 0.95
