"""
Mini-batch planning and padded collation.

Reviews are sorted by segment count and chunked, so a batch holds reviews of
similar M; batch order is shuffled every epoch. Collation pads each batch to
its largest review and segment and returns masks marking the real entries.

Segments shorter than the widest convolution kernel are zero-padded on both
sides (the extra position goes right) so every kernel width has at least
one window; windows that reach into batch padding are masked out.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from app.models.corpus import Corpus, Review
from app.providers.vocabulary import PAD_INDEX, Vocabulary

Bag = Sequence[Sequence[str]]


@dataclass
class BatchPlan:
    """Review indices per batch, in visiting order."""

    batches: list[list[int]]

    def __iter__(self) -> Iterator[list[int]]:
        return iter(self.batches)

    def __len__(self) -> int:
        return len(self.batches)

    @property
    def sizes(self) -> list[int]:
        return [len(batch) for batch in self.batches]


def make_batches(
    corpus: Corpus, batch_size: int, rng: np.random.Generator | int | None = None
) -> BatchPlan:
    """
    Sort by segment count, chunk into groups of batch_size, shuffle the
    order of the groups (not their content) when rng is given.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = sorted(range(len(corpus)), key=lambda i: (corpus.reviews[i].num_segments, i))
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if rng is not None:
        generator = np.random.default_rng(rng) if isinstance(rng, int) else rng
        batches = [batches[i] for i in generator.permutation(len(batches))]
    return BatchPlan(batches=batches)


@dataclass
class Batch:
    """
    Padded token ids for B bags of up to M segments of up to N tokens.

    ids, token_mask:  (B, M, N)
    segment_mask:     (B, M)
    window_masks[w]:  (B, M, N - w + 1), valid convolution windows of width w
    """

    ids: np.ndarray
    token_mask: np.ndarray
    segment_mask: np.ndarray
    window_masks: dict[int, np.ndarray]

    @property
    def shape(self) -> tuple[int, int, int]:
        b, m, n = self.ids.shape
        return b, m, n

    @property
    def segment_counts(self) -> np.ndarray:
        return self.segment_mask.sum(axis=1)


def padded_length(num_tokens: int, kernel_widths: Sequence[int]) -> int:
    return max(num_tokens, max(kernel_widths, default=1))


def collate(bags: Sequence[Bag], vocab: Vocabulary, kernel_widths: Sequence[int] = ()) -> Batch:
    """Pad bags (each a list of token sequences) into one Batch."""
    if not bags or any(len(bag) == 0 for bag in bags):
        raise ValueError("every bag needs at least one segment")
    max_m = max(len(bag) for bag in bags)
    max_n = max(padded_length(len(seg), kernel_widths) for bag in bags for seg in bag)

    ids = np.full((len(bags), max_m, max_n), PAD_INDEX, dtype=np.int64)
    token_mask = np.zeros(ids.shape, dtype=bool)
    segment_mask = np.zeros((len(bags), max_m), dtype=bool)
    window_masks = {
        w: np.zeros((len(bags), max_m, max_n - w + 1), dtype=bool) for w in kernel_widths
    }

    for b, bag in enumerate(bags):
        for m, tokens in enumerate(bag):
            length = padded_length(len(tokens), kernel_widths)
            left = (length - len(tokens)) // 2
            ids[b, m, left : left + len(tokens)] = vocab.encode(tokens)
            token_mask[b, m, left : left + len(tokens)] = True
            segment_mask[b, m] = True
            for w, mask in window_masks.items():
                mask[b, m, : length - w + 1] = True

    return Batch(
        ids=ids, token_mask=token_mask, segment_mask=segment_mask, window_masks=window_masks
    )


def review_bags(reviews: Sequence[Review]) -> list[Bag]:
    """One bag per review with its segments as instances."""
    return [[segment.tokens for segment in review.segments] for review in reviews]


def flat_bags(reviews: Sequence[Review]) -> list[Bag]:
    """One single-instance bag per review: all of its tokens in order."""
    return [[review.tokens] for review in reviews]


def segment_bags(review: Review) -> list[Bag]:
    """Each segment of a review as its own single-instance bag."""
    return [[segment.tokens] for segment in review.segments]


def targets(reviews: Sequence[Review]) -> tuple[np.ndarray, np.ndarray]:
    """0-based labels and sample weights."""
    labels = np.array([review.label - 1 for review in reviews], dtype=np.int64)
    weights = np.array([review.sample_weight for review in reviews], dtype=np.float64)
    return labels, weights
