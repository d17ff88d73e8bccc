"""
Shared fixtures and the --runslow switch.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from app.diffcore.tensor import ModelParams
from app.models.corpus import Corpus, Review, Segment, Split
from app.models.spec import ModelKind, ModelSpec
from app.providers.vocabulary import Vocabulary, build_vocabulary
from app.services.baselines import ReviewCnnModel
from app.services.milnet import HierarchicalModel


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow synthetic experiments"
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_review(
    review_id: str,
    label: int,
    sentences: list[str],
    gold: list[int] | None = None,
    weight: float = 1.0,
) -> Review:
    segments = tuple(
        Segment(
            tokens=tuple(sentence.lower().split()),
            raw_text=sentence,
            gold_label=None if gold is None else gold[i],
        )
        for i, sentence in enumerate(sentences)
    )
    return Review(id=review_id, segments=segments, label=label, sample_weight=weight)


@pytest.fixture
def tiny_corpus() -> Corpus:
    """Two-class corpus where 'sick' marks class 2 segments."""
    reviews = (
        make_review("r1", 2, ["great food here", "i got sick after", "nice staff"], [1, 2, 1]),
        make_review("r2", 1, ["lovely place", "good pasta"], [1, 1]),
        make_review("r3", 2, ["sick all night", "the soup was cold"], [2, 1]),
        make_review("r4", 1, ["nice view", "friendly staff", "good wine"], [1, 1, 1]),
        make_review("r5", 2, ["felt sick", "bad fish"], [2, 2]),
        make_review("r6", 1, ["good service"], [1]),
    )
    return Corpus(reviews=reviews, num_classes=2, split=Split.TRAIN)


@pytest.fixture
def tiny_vocab(tiny_corpus):
    return build_vocabulary([tiny_corpus])


@pytest.fixture
def tiny_embeddings(tiny_vocab):
    rng = np.random.default_rng(0)
    table = rng.uniform(-0.25, 0.25, size=(len(tiny_vocab), 6))
    table[0] = 0.0
    return table


def axis_embeddings(vocab: Vocabulary) -> np.ndarray:
    """Indicative synthetic tokens on one axis, background tokens on the other."""
    table = np.zeros((len(vocab), 2))
    for i, token in enumerate(vocab.tokens[2:], start=2):
        table[i, 0 if token.startswith("c") else 1] = 1.0
    return table


def small_spec(kind: ModelKind, vocab, num_classes: int = 2, **updates) -> ModelSpec:
    values = dict(
        kind=kind,
        num_classes=num_classes,
        vocab_size=len(vocab),
        vocab_digest=vocab.digest(),
        embedding_dim=6,
        kernel_widths=(1, 2),
        feature_maps=3,
        gru_hidden=4,
        attention_dim=5,
        dropout=0.0,
    )
    values.update(updates)
    return ModelSpec(**values)


FIXTURES = Path(__file__).parent / "fixtures"


def load_golden() -> dict:
    """Hand-computed two-segment review and its expected outputs."""
    return json.loads((FIXTURES / "golden_model.json").read_text(encoding="utf-8"))


def golden_review(golden: dict) -> Review:
    review = golden["review"]
    segments = tuple(
        Segment(tokens=tuple(item["tokens"]), raw_text=item["text"])
        for item in review["segments"]
    )
    return Review(id=review["id"], segments=segments, label=review["label"])


def golden_model(kind: ModelKind, golden: dict | None = None):
    """Build a model carrying the fixture weights; Rev-CNN keeps only encoder and classifier."""
    golden = golden or load_golden()
    vocab = Vocabulary(tokens=list(golden["vocab"]))
    spec = ModelSpec(
        kind=kind,
        num_classes=2,
        vocab_size=len(vocab),
        vocab_digest=vocab.digest(),
        **golden["architecture"],
    )
    params = ModelParams()
    for name, values in golden["params"].items():
        if kind is ModelKind.REV_CNN and name.startswith(("gru.", "att.")):
            continue
        params.add(name, np.asarray(values, dtype=np.float64))
    if kind is ModelKind.REV_CNN:
        return ReviewCnnModel(spec, params, vocab)
    return HierarchicalModel(spec, params, vocab)
