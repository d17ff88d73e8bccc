"""
Hierarchical multiple-instance network.

Each segment gets its own class distribution p_i = softmax(W h_i + b) from
its CNN encoding h_i. The review distribution is the weighted average

    p = sum_i a_i p_i / sum_i a_i

where the weights a_i come from the aggregation kind:

    uniform             a_i = 1 / M
    softmax_attention   a = softmax(e)
    sigmoid_attention   a_i = sigmoid(e_i)

with attention scores e_i = u_a . tanh(W_a h'_i + b_a) computed from the
Bi-GRU contextualized vectors h'_i. Sigmoid weights are independent per
segment, so several segments (or none) can carry the review label.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.diffcore import ops
from app.diffcore.tape import no_recording
from app.diffcore.tensor import ModelParams, Tensor
from app.models.corpus import Review
from app.models.spec import AggregationKind, ModelSpec
from app.providers.vocabulary import Vocabulary
from app.services import encoders
from app.services.batching import Batch, collate, review_bags

AGGREGATION_EPSILON = 1e-8


@dataclass
class ReviewPrediction:
    """Review and per-segment outputs of one forward pass."""

    probs: np.ndarray
    segment_probs: np.ndarray
    attention: np.ndarray
    scores: np.ndarray | None = None
    fallback: bool = False

    @property
    def label(self) -> int:
        """Predicted 1-based review label; ties go to the lower class."""
        return int(np.argmax(self.probs)) + 1

    @property
    def segment_labels(self) -> list[int]:
        return [int(label) + 1 for label in np.argmax(self.segment_probs, axis=-1)]


@dataclass
class MilOutput:
    """Batched forward pass; every tensor keeps the padded (B, M) layout."""

    review_probs: Tensor
    segment_probs: Tensor
    attention: Tensor
    scores: Tensor | None
    fallback: np.ndarray

    def prediction(self, index: int, num_segments: int) -> ReviewPrediction:
        scores = None
        if self.scores is not None:
            scores = self.scores.values[index, :num_segments].copy()
        return ReviewPrediction(
            probs=self.review_probs.values[index].copy(),
            segment_probs=self.segment_probs.values[index, :num_segments].copy(),
            attention=self.attention.values[index, :num_segments].copy(),
            scores=scores,
            fallback=bool(self.fallback[index]),
        )


# Operations on one review's vectors


def classify_segment(h: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """p_i = softmax(W h_i + b) for h of shape (..., l), W (C, l), b (C,)."""
    return ops.softmax(ops.linear(h, weight) + bias)


def attention_scores(h_context: Tensor, weight: Tensor, bias: Tensor, query: Tensor) -> Tensor:
    """e_i = u_a . tanh(W_a h'_i + b_a) for h' of shape (..., n): -> (...)."""
    hidden = ops.tanh(ops.linear(h_context, weight) + bias)
    return ops.sum(ops.mul(hidden, query), axis=-1)


def softmax_weights(scores: Tensor, mask: np.ndarray | None = None) -> Tensor:
    return ops.softmax(scores, mask)


def sigmoid_weights(scores: Tensor, mask: np.ndarray | None = None) -> Tensor:
    weights = ops.sigmoid(scores)
    if mask is None:
        return weights
    return ops.mul(weights, np.asarray(mask, dtype=np.float64))


def uniform_weights(mask: np.ndarray) -> Tensor:
    valid = np.asarray(mask, dtype=np.float64)
    counts = np.maximum(valid.sum(axis=-1, keepdims=True), 1.0)
    return Tensor(valid / counts)


def aggregate(
    segment_probs: Tensor, weights: Tensor, mask: np.ndarray | None = None
) -> tuple[Tensor, np.ndarray]:
    """
    Weighted average of segment distributions: (..., M, C), (..., M) -> (..., C).

    Where the weights sum below 1e-8 the plain average of the valid
    segments is used instead; the returned flags mark those reviews.
    """
    valid = np.ones(weights.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    fallback = weights.values.sum(axis=-1) < AGGREGATION_EPSILON
    if fallback.any():
        keep = (~fallback).astype(np.float64)[..., None]
        weights = ops.add(ops.mul(weights, keep), valid * (1.0 - keep))
    column = ops.reshape(weights, weights.shape + (1,))
    numerator = ops.sum(ops.mul(segment_probs, column), axis=-2)
    denominator = ops.sum(weights, axis=-1, keepdims=True)
    return ops.div(numerator, denominator), fallback


class HierarchicalModel:
    """CNN segment encoder + segment classifier + Bi-GRU attention + aggregation."""

    def __init__(self, spec: ModelSpec, params: ModelParams, vocab: Vocabulary):
        if spec.aggregation is None:
            raise ValueError(f"{spec.kind.value} is not a multiple-instance model")
        self.spec = spec
        self.params = params
        self.vocab = vocab
        self.aggregation: AggregationKind = spec.aggregation

    @classmethod
    def initialize(
        cls, spec: ModelSpec, vocab: Vocabulary, embeddings: np.ndarray, seed: int
    ) -> HierarchicalModel:
        rng = np.random.default_rng(seed)
        params = ModelParams()
        params.add(encoders.EMBEDDING, embeddings, trainable=spec.train_embeddings)
        encoders.init_cnn(params, spec, rng, prefix="cnn")
        params.add("clf.W", rng.uniform(-0.01, 0.01, size=(spec.num_classes, spec.segment_dim)))
        params.add("clf.b", np.zeros(spec.num_classes))
        if spec.aggregation is not AggregationKind.UNIFORM:
            encoders.init_bigru(params, "gru", spec.segment_dim, spec.gru_hidden, rng)
            m, n = spec.attention_dim, spec.context_dim
            params.add("att.W", encoders.uniform_init(rng, (m, n), n, m))
            params.add("att.b", np.zeros(m))
            params.add("att.u", encoders.uniform_init(rng, (m,), m, 1))
        return cls(spec, params, vocab)

    def l2_penalty(self) -> Tensor:
        """Squared norm of the segment classifier weights."""
        weight = self.params["clf.W"]
        return ops.sum(ops.mul(weight, weight))

    def forward(
        self,
        batch: Batch,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> MilOutput:
        spec, params = self.spec, self.params
        x = encoders.embed(params, batch, spec.dropout, training, rng)
        h = encoders.encode_cnn_batch(x, batch, params, spec, prefix="cnn")
        segment_probs = classify_segment(h, params["clf.W"], params["clf.b"])

        scores = None
        if self.aggregation is AggregationKind.UNIFORM:
            weights = uniform_weights(batch.segment_mask)
        else:
            context = encoders.contextualize_bigru_batch(
                h, batch.segment_mask, params, "gru", spec.dropout, training, rng
            )
            scores = attention_scores(context, params["att.W"], params["att.b"], params["att.u"])
            if self.aggregation is AggregationKind.SOFTMAX_ATTENTION:
                weights = softmax_weights(scores, batch.segment_mask)
            else:
                weights = sigmoid_weights(scores, batch.segment_mask)

        review_probs, fallback = aggregate(segment_probs, weights, batch.segment_mask)
        return MilOutput(
            review_probs=review_probs,
            segment_probs=segment_probs,
            attention=weights,
            scores=scores,
            fallback=fallback,
        )

    def forward_batch(
        self,
        reviews: Sequence[Review],
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        batch = collate(review_bags(reviews), self.vocab, self.spec.kernel_widths)
        return self.forward(batch, training, rng).review_probs

    def predict_many(self, reviews: Sequence[Review]) -> list[ReviewPrediction]:
        """Evaluation-mode predictions, one per review, without recording."""
        if not reviews:
            return []
        with no_recording():
            batch = collate(review_bags(reviews), self.vocab, self.spec.kernel_widths)
            output = self.forward(batch)
        return [
            output.prediction(i, review.num_segments) for i, review in enumerate(reviews)
        ]

    def predict(self, review: Review) -> ReviewPrediction:
        return self.predict_many([review])[0]


def forward_review(
    review: Review,
    model: HierarchicalModel,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ReviewPrediction:
    """Run one review through the model and return every intermediate."""
    with no_recording():
        batch = collate(review_bags([review]), model.vocab, model.spec.kernel_widths)
        output = model.forward(batch, training, rng)
    return output.prediction(0, review.num_segments)


def predict_segments(review: Review, model: HierarchicalModel) -> list[tuple[int, float]]:
    """Per-segment (1-based argmax label, attention weight)."""
    prediction = model.predict(review)
    return list(zip(prediction.segment_labels, prediction.attention.tolist(), strict=True))
