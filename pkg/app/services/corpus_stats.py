"""
Witness statistics of a gold-labeled corpus.

For a class x:
    WR(x)      = segments labeled x inside reviews labeled x
                 / segments inside reviews labeled x
    Witness(x) = mean number of segments labeled x per review labeled x
Classes without reviews report both as absent.
"""

from __future__ import annotations

from collections.abc import Iterable

from app.core.errors import DegenerateDataError
from app.core.logging import get_logger
from app.models.corpus import Corpus, Review
from app.models.report import ClassStats, CorpusStats

logger = get_logger(__name__)


def _class_stats(
    label: int, reviews: list[Review], matches: Iterable[int], total_segments: int
) -> ClassStats:
    of_class = [r for r in reviews if r.label == label]
    labeled = sum(1 for review in reviews for s in review.segments if s.gold_label in matches)
    share = labeled / total_segments if total_segments else 0.0
    if not of_class:
        return ClassStats(label=label, segment_share=share, reviews=0)
    inside = sum(r.num_segments for r in of_class)
    witnesses = sum(1 for r in of_class for s in r.segments if s.gold_label == r.label)
    return ClassStats(
        label=label,
        segment_share=share,
        reviews=len(of_class),
        witness=witnesses / len(of_class),
        witness_rate=witnesses / inside,
    )


def corpus_stats(corpus: Corpus, background_class: int | None = None) -> CorpusStats:
    """
    Per-class segment share, witness count and witness rate.

    With more than two classes and a background class, a "salient" row
    pools every other class: its witnesses are segments whose label matches
    their (salient) review label.

    Raises:
        DegenerateDataError: the corpus lacks gold segment labels.
    """
    if not corpus.has_gold:
        raise DegenerateDataError("corpus statistics need gold segment labels")

    reviews = list(corpus.reviews)
    total = sum(r.num_segments for r in reviews)
    classes = {
        str(label): _class_stats(label, reviews, (label,), total)
        for label in range(1, corpus.num_classes + 1)
    }

    salient = None
    if background_class is not None and corpus.num_classes > 2:
        salient_labels = [c for c in range(1, corpus.num_classes + 1) if c != background_class]
        pooled = [r for r in reviews if r.label in salient_labels]
        labeled = sum(1 for r in reviews for s in r.segments if s.gold_label in salient_labels)
        inside = sum(r.num_segments for r in pooled)
        witnesses = sum(1 for r in pooled for s in r.segments if s.gold_label == r.label)
        salient = ClassStats(
            label=0,
            segment_share=labeled / total if total else 0.0,
            reviews=len(pooled),
            witness=witnesses / len(pooled) if pooled else None,
            witness_rate=witnesses / inside if pooled else None,
        )

    stats = CorpusStats(
        num_reviews=len(reviews), num_segments=total, classes=classes, salient=salient
    )
    logger.info(
        "Corpus stats: %d reviews, %d segments, WR=%s",
        stats.num_reviews,
        stats.num_segments,
        {k: v.witness_rate for k, v in classes.items()},
    )
    return stats
