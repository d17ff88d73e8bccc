"""
Tests for witness statistics.
"""

import pytest

from app.core.errors import DegenerateDataError
from app.models.corpus import Corpus
from app.services.corpus_stats import corpus_stats

from .conftest import make_review


class TestCorpusStats:
    def test_witness_rate_and_share(self, tiny_corpus):
        stats = corpus_stats(tiny_corpus)
        assert stats.num_reviews == 6
        assert stats.num_segments == 13

        sick = stats.classes["2"]
        assert sick.reviews == 3
        assert sick.witness_rate == pytest.approx(4 / 7)
        assert sick.witness == pytest.approx(4 / 3)
        assert sick.segment_share == pytest.approx(4 / 13)
        assert stats.classes["1"].witness_rate == pytest.approx(1.0)
        assert stats.salient is None

    def test_class_without_reviews(self):
        corpus = Corpus(
            reviews=(make_review("a", 1, ["fine", "ok"], [1, 2]),), num_classes=3
        )
        stats = corpus_stats(corpus)
        assert stats.classes["3"].reviews == 0
        assert stats.classes["3"].witness_rate is None
        assert stats.classes["2"].segment_share == pytest.approx(0.5)

    def test_salient_row_pools_non_background_classes(self):
        corpus = Corpus(
            reviews=(
                make_review("a", 2, ["x", "y", "z"], [2, 1, 1]),
                make_review("b", 3, ["x", "y"], [3, 3]),
                make_review("c", 1, ["x"], [1]),
            ),
            num_classes=3,
        )
        stats = corpus_stats(corpus, background_class=1)
        assert stats.salient is not None
        assert stats.salient.reviews == 2
        assert stats.salient.witness_rate == pytest.approx(3 / 5)
        assert stats.salient.segment_share == pytest.approx(3 / 6)

    def test_requires_gold(self):
        corpus = Corpus(reviews=(make_review("a", 1, ["fine"]),), num_classes=2)
        with pytest.raises(DegenerateDataError):
            corpus_stats(corpus)
