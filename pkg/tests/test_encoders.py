"""
Tests for batching and segment encoders.

Convolution and GRU outputs are checked against plain loops; batched and
single-segment forms must agree exactly.
"""

import numpy as np
import pytest

from app.core.errors import DegenerateDataError
from app.diffcore.tensor import ModelParams, Tensor
from app.models.spec import ModelKind
from app.providers.vocabulary import PAD_INDEX, UNK_INDEX
from app.services import encoders
from app.services.batching import collate, flat_bags, make_batches, review_bags, targets

from .conftest import make_review, small_spec


GRU_KEYS = tuple(f"{kind}_{gate}" for kind in ("W", "U", "b") for gate in ("z", "r", "h"))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _naive_gru(inputs, params, name):
    p = {key: params[f"{name}.{key}"].values for key in GRU_KEYS}
    state = np.zeros(p["U_z"].shape[0])
    outputs = []
    for x in inputs:
        z = _sigmoid(x @ p["W_z"] + state @ p["U_z"] + p["b_z"])
        r = _sigmoid(x @ p["W_r"] + state @ p["U_r"] + p["b_r"])
        candidate = np.tanh(x @ p["W_h"] + (r * state) @ p["U_h"] + p["b_h"])
        state = (1.0 - z) * state + z * candidate
        outputs.append(state)
    return np.array(outputs)


def _naive_bigru(inputs, params, prefix="gru"):
    forward = _naive_gru(inputs, params, f"{prefix}.fwd")
    backward = _naive_gru(inputs[::-1], params, f"{prefix}.bwd")[::-1]
    return np.concatenate([forward, backward], axis=1)


def _cnn_params(spec, embeddings, seed=0):
    params = ModelParams()
    params.add(encoders.EMBEDDING, embeddings)
    encoders.init_cnn(params, spec, np.random.default_rng(seed), prefix="cnn")
    return params


class TestBatching:
    def test_batches_group_similar_segment_counts(self, tiny_corpus):
        plan = make_batches(tiny_corpus, batch_size=2)
        counts = [[tiny_corpus.reviews[i].num_segments for i in batch] for batch in plan]
        assert counts == [[1, 2], [2, 2], [3, 3]]

    def test_shuffle_permutes_batches_not_content(self, tiny_corpus):
        plain = make_batches(tiny_corpus, batch_size=2)
        shuffled = make_batches(tiny_corpus, batch_size=2, rng=4)
        assert sorted(map(tuple, shuffled)) == sorted(map(tuple, plain))
        assert make_batches(tiny_corpus, 2, rng=4).batches == shuffled.batches

    def test_invalid_batch_size(self, tiny_corpus):
        with pytest.raises(ValueError):
            make_batches(tiny_corpus, batch_size=0)

    def test_collate_shapes_and_masks(self, tiny_corpus, tiny_vocab):
        batch = collate(review_bags(tiny_corpus.reviews[:2]), tiny_vocab, kernel_widths=(1, 2))
        assert batch.shape == (2, 3, 4)
        np.testing.assert_array_equal(batch.segment_mask, [[True] * 3, [True, True, False]])
        np.testing.assert_array_equal(batch.segment_counts, [3, 2])
        assert batch.ids[1, 2].tolist() == [PAD_INDEX] * 4
        # "lovely place" has 2 tokens: windows of width 2 stop at position 1
        np.testing.assert_array_equal(batch.window_masks[2][1, 0], [True, False, False])

    def test_short_segment_is_padded_on_both_sides(self, tiny_vocab):
        batch = collate([[("good", "sick")]], tiny_vocab, kernel_widths=(5,))
        expected = [PAD_INDEX, tiny_vocab.index("good"), tiny_vocab.index("sick"), 0, 0]
        assert batch.ids[0, 0].tolist() == expected
        np.testing.assert_array_equal(batch.window_masks[5][0, 0], [True])

    def test_unknown_tokens_map_to_unknown_row(self, tiny_vocab):
        batch = collate([[("zebra",)]], tiny_vocab)
        assert batch.ids[0, 0, 0] == UNK_INDEX

    def test_flat_bags_join_segments(self, tiny_corpus):
        bag = flat_bags(tiny_corpus.reviews[:1])[0]
        assert len(bag) == 1
        assert bag[0] == tiny_corpus.reviews[0].tokens

    def test_targets_are_zero_based(self):
        reviews = [make_review("a", 2, ["x"], weight=0.5), make_review("b", 1, ["y"])]
        labels, weights = targets(reviews)
        np.testing.assert_array_equal(labels, [1, 0])
        np.testing.assert_array_equal(weights, [0.5, 1.0])

    def test_empty_bag_is_rejected(self, tiny_vocab):
        with pytest.raises(ValueError):
            collate([[]], tiny_vocab)


class TestEmbedAndAverage:
    def test_padding_positions_embed_to_zero(self, tiny_vocab, tiny_embeddings):
        table = tiny_embeddings.copy()
        table[PAD_INDEX] = 1.0
        params = ModelParams()
        params.add(encoders.EMBEDDING, table)
        batch = collate([[("sick",), ("good", "wine")]], tiny_vocab)
        x = encoders.embed(params, batch).values
        np.testing.assert_array_equal(x[0, 0, 1], np.zeros(6))

    def test_average_embedding(self, tiny_vocab, tiny_embeddings):
        table = Tensor(tiny_embeddings)
        out = encoders.encode_avg(["good", "zebra"], tiny_vocab, table)
        expected = (tiny_embeddings[tiny_vocab.index("good")] + tiny_embeddings[UNK_INDEX]) / 2
        np.testing.assert_allclose(out.values, expected, atol=1e-12)

    def test_average_of_empty_segment_raises(self, tiny_vocab, tiny_embeddings):
        with pytest.raises(DegenerateDataError):
            encoders.encode_avg([], tiny_vocab, Tensor(tiny_embeddings))


class TestCnnEncoder:
    def test_matches_naive_convolution(self, tiny_vocab, tiny_embeddings):
        spec = small_spec(ModelKind.MIL_AVG, tiny_vocab)
        params = _cnn_params(spec, tiny_embeddings)
        tokens = ["great", "food", "here"]
        x = tiny_embeddings[tiny_vocab.encode(tokens)]

        expected = []
        for width in spec.kernel_widths:
            kernel = params[f"cnn.kernel{width}"].values
            bias = params[f"cnn.bias{width}"].values
            windows = np.array(
                [
                    [np.sum(x[t : t + width] * kernel[:, :, f]) + bias[f] for f in range(3)]
                    for t in range(len(tokens) - width + 1)
                ]
            )
            expected.append(np.maximum(windows, 0.0).max(axis=0))

        out = encoders.encode_cnn(tokens, tiny_vocab, params, spec)
        assert out.shape == (spec.segment_dim,)
        np.testing.assert_allclose(out.values, np.concatenate(expected), atol=1e-12)

    def test_batch_equals_single(self, tiny_vocab, tiny_embeddings):
        spec = small_spec(ModelKind.MIL_AVG, tiny_vocab, kernel_widths=(1, 2, 3))
        params = _cnn_params(spec, tiny_embeddings, seed=5)
        bags = [[("sick",), ("great", "food", "here")], [("i", "got", "sick", "after", "x")]]
        batch = collate(bags, tiny_vocab, spec.kernel_widths)
        x = encoders.embed(params, batch)
        batched = encoders.encode_cnn_batch(x, batch, params, spec, "cnn").values

        for b, bag in enumerate(bags):
            for m, tokens in enumerate(bag):
                single = encoders.encode_cnn(tokens, tiny_vocab, params, spec).values
                np.testing.assert_allclose(batched[b, m], single, atol=1e-12)

    def test_tanh_nonlinearity_bounds_features(self, tiny_vocab, tiny_embeddings):
        spec = small_spec(ModelKind.MIL_AVG, tiny_vocab, nonlinearity="tanh")
        params = _cnn_params(spec, tiny_embeddings)
        out = encoders.encode_cnn(["good", "wine"], tiny_vocab, params, spec).values
        assert np.all(np.abs(out) < 1.0)


class TestBiGru:
    def test_matches_naive_recurrence(self):
        rng = np.random.default_rng(2)
        params = ModelParams()
        encoders.init_bigru(params, "gru", input_dim=5, hidden=4, rng=rng)
        inputs = rng.normal(size=(4, 5))
        out = encoders.contextualize_bigru(Tensor(inputs), params)
        assert out.shape == (4, 8)
        np.testing.assert_allclose(out.values, _naive_bigru(inputs, params), atol=1e-12)

    def test_padded_batch_equals_single(self):
        rng = np.random.default_rng(3)
        params = ModelParams()
        encoders.init_bigru(params, "gru", input_dim=3, hidden=2, rng=rng)
        long_review = rng.normal(size=(3, 3))
        short_review = rng.normal(size=(2, 3))
        padded = np.zeros((2, 3, 3))
        padded[0] = long_review
        padded[1, :2] = short_review
        mask = np.array([[True, True, True], [True, True, False]])

        batched = encoders.contextualize_bigru_batch(Tensor(padded), mask, params, "gru").values
        short = encoders.contextualize_bigru(Tensor(short_review), params).values
        np.testing.assert_allclose(batched[1, :2], short, atol=1e-12)
        np.testing.assert_allclose(batched[0], _naive_bigru(long_review, params), atol=1e-12)

    def test_single_segment_sees_both_directions(self):
        rng = np.random.default_rng(4)
        params = ModelParams()
        encoders.init_bigru(params, "gru", input_dim=2, hidden=3, rng=rng)
        out = encoders.contextualize_bigru(Tensor(rng.normal(size=(1, 2))), params).values
        assert out.shape == (1, 6)
        assert not np.allclose(out[0, :3], out[0, 3:])

    def test_tied_directions_mirror_under_reversal(self):
        rng = np.random.default_rng(5)
        source = ModelParams()
        encoders.init_bigru(source, "gru", input_dim=3, hidden=2, rng=rng)
        params = ModelParams()
        for direction in ("fwd", "bwd"):
            for key in GRU_KEYS:
                params.add(f"gru.{direction}.{key}", source[f"gru.fwd.{key}"].values)
        inputs = rng.normal(size=(5, 3))
        out = encoders.contextualize_bigru(Tensor(inputs), params).values
        reversed_out = encoders.contextualize_bigru(Tensor(inputs[::-1]), params).values
        np.testing.assert_allclose(reversed_out[:, :2], out[::-1, 2:], atol=1e-12)
        np.testing.assert_allclose(reversed_out[:, 2:], out[::-1, :2], atol=1e-12)

    def test_context_depends_on_segment_order(self):
        rng = np.random.default_rng(6)
        params = ModelParams()
        encoders.init_bigru(params, "gru", input_dim=3, hidden=2, rng=rng)
        inputs = rng.normal(size=(4, 3))
        order = np.array([2, 0, 3, 1])
        out = encoders.contextualize_bigru(Tensor(inputs), params).values
        shuffled = encoders.contextualize_bigru(Tensor(inputs[order]), params).values
        assert not np.allclose(shuffled, out[order], atol=1e-6)
