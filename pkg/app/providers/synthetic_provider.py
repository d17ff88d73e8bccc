"""
Synthetic review corpora with a controlled witness rate.

Every non-background class c owns an indicative vocabulary c{c}t0, c{c}t1, ...
and all classes share a background vocabulary bg0, bg1, .... A review of
class c plants round-half-up(WR * M) witness segments, built mostly from
class-c tokens, among M segments; the other segments are background text.
Reviews of the background class hold only background segments, which is
the setting of a rare positive class such as foodborne illness reports.

Without a background class the non-witness segments are witnesses of other
classes, spread so that the review's own class stays the strict plurality.

Generation draws from a single seeded stream (train, then validation, then
test), so the same spec always yields the same corpora.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from app.core.errors import InfeasibleSpecError
from app.core.logging import get_logger
from app.models.corpus import Corpus, Review, Segment, Split, SyntheticSpec

logger = get_logger(__name__)

INDICATIVE_SHARE = 0.5


@dataclass
class SyntheticCorpus:
    """The three generated splits."""

    train: Corpus
    validation: Corpus
    test: Corpus

    def splits(self) -> dict[Split, Corpus]:
        return {Split.TRAIN: self.train, Split.VALIDATION: self.validation, Split.TEST: self.test}


def indicative_token(label: int, j: int) -> str:
    return f"c{label}t{j}"


def background_token(j: int) -> str:
    return f"bg{j}"


def witness_count(spec: SyntheticSpec, num_segments: int) -> int:
    """Witnesses planted in a review of a non-background class with M segments."""
    if spec.fixed_witnesses is not None:
        return spec.fixed_witnesses
    return min(num_segments, math.floor(spec.witness_rate * num_segments + 0.5))


def check_feasible(spec: SyntheticSpec) -> None:
    """
    Raises:
        InfeasibleSpecError: some segment count in range gets no witness, or
            the requested witnesses cannot fit or cannot dominate the review.
    """
    if spec.fixed_witnesses is not None and spec.fixed_witnesses > spec.min_segments:
        raise InfeasibleSpecError(
            f"fixed_witnesses={spec.fixed_witnesses} exceeds min_segments={spec.min_segments}"
        )
    if witness_count(spec, spec.min_segments) < 1:
        raise InfeasibleSpecError(
            f"witness rate {spec.witness_rate} plants no witness in a review of "
            f"{spec.min_segments} segments"
        )
    if spec.background_class is None:
        others = spec.num_classes - 1
        for m in range(spec.min_segments, spec.max_segments + 1):
            k = witness_count(spec, m)
            if m - k > others * (k - 1):
                raise InfeasibleSpecError(
                    f"without a background class, {k} witnesses cannot outnumber every "
                    f"other class in a review of {m} segments"
                )


class _Generator:
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.positive_classes = [
            c for c in range(1, spec.num_classes + 1) if c != spec.background_class
        ]

    def _length(self) -> int:
        return int(self.rng.integers(self.spec.min_tokens, self.spec.max_tokens + 1))

    def _background(self) -> str:
        return background_token(int(self.rng.integers(self.spec.background_vocab_size)))

    def _any_token(self) -> str:
        total = len(self.positive_classes) * self.spec.indicative_vocab_size
        pick = int(self.rng.integers(total + self.spec.background_vocab_size))
        if pick >= total:
            return background_token(pick - total)
        label = self.positive_classes[pick // self.spec.indicative_vocab_size]
        return indicative_token(label, pick % self.spec.indicative_vocab_size)

    def _noisy(self, tokens: list[str]) -> list[str]:
        if self.spec.noise_rate <= 0:
            return tokens
        flips = self.rng.random(len(tokens)) < self.spec.noise_rate
        return [self._any_token() if flip else token for token, flip in zip(tokens, flips)]

    def _witness_tokens(self, label: int) -> list[str]:
        length = self._length()
        indicative = self.rng.random(length) < INDICATIVE_SHARE
        if not indicative.any():
            indicative[int(self.rng.integers(length))] = True
        return [
            indicative_token(label, int(self.rng.integers(self.spec.indicative_vocab_size)))
            if flag
            else self._background()
            for flag in indicative
        ]

    def _background_tokens(self) -> list[str]:
        return [self._background() for _ in range(self._length())]

    def _other_labels(self, label: int, count: int, witnesses: int) -> list[int]:
        """Labels of non-witness segments when there is no background class."""
        used: dict[int, int] = {}
        labels = []
        for _ in range(count):
            choices = [
                c
                for c in self.positive_classes
                if c != label and used.get(c, 0) < witnesses - 1
            ]
            other = choices[int(self.rng.integers(len(choices)))]
            used[other] = used.get(other, 0) + 1
            labels.append(other)
        return labels

    def review(self, review_id: str, keep_gold: bool) -> Review:
        spec = self.spec
        label = int(self.rng.integers(1, spec.num_classes + 1))
        num_segments = int(self.rng.integers(spec.min_segments, spec.max_segments + 1))

        plan: list[int | None]
        if label == spec.background_class:
            plan = [None] * num_segments
        else:
            k = witness_count(spec, num_segments)
            positions = set(self.rng.choice(num_segments, size=k, replace=False).tolist())
            if spec.background_class is None:
                others = iter(self._other_labels(label, num_segments - k, k))
                plan = [label if i in positions else next(others) for i in range(num_segments)]
            else:
                plan = [label if i in positions else None for i in range(num_segments)]

        segments = []
        for owner in plan:
            if owner is None:
                tokens = self._background_tokens()
                gold = spec.background_class
            else:
                tokens = self._witness_tokens(owner)
                gold = owner
            tokens = self._noisy(tokens)
            raw_text = " ".join(tokens).capitalize() + "."
            segments.append(
                Segment(
                    tokens=tuple(tokens),
                    raw_text=raw_text,
                    gold_label=gold if keep_gold else None,
                )
            )
        return Review(id=review_id, segments=tuple(segments), label=label)

    def corpus(self, split: Split, count: int, keep_gold: bool) -> Corpus:
        reviews = tuple(self.review(f"{split.value}-{i:05d}", keep_gold) for i in range(count))
        return Corpus(reviews=reviews, num_classes=self.spec.num_classes, split=split)


def generate_synthetic(spec: SyntheticSpec, keep_gold: bool = False) -> SyntheticCorpus:
    """
    Generate train/validation/test corpora for spec.

    Gold segment labels are kept on the test split only, unless keep_gold
    is set (used to measure the witness rate of the training split).

    Raises:
        InfeasibleSpecError: see check_feasible.
    """
    check_feasible(spec)
    generator = _Generator(spec)
    result = SyntheticCorpus(
        train=generator.corpus(Split.TRAIN, spec.num_reviews, keep_gold),
        validation=generator.corpus(Split.VALIDATION, spec.validation_reviews, keep_gold),
        test=generator.corpus(Split.TEST, spec.test_reviews, keep_gold=True),
    )
    logger.info(
        "Generated synthetic corpus: %d/%d/%d reviews, C=%d, WR=%.3f, seed=%d",
        len(result.train),
        len(result.validation),
        len(result.test),
        spec.num_classes,
        spec.witness_rate,
        spec.seed,
    )
    return result
