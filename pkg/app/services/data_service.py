"""
Data service: facade over the canonical data providers.

The CLI reads and writes corpora, builds vocabularies and loads embeddings
through this module only.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np

from app.core.logging import get_logger
from app.models.corpus import Corpus, Split, SyntheticSpec
from app.providers.corpus_provider import load_corpus, save_corpus
from app.providers.embedding_provider import load_embeddings, random_embeddings
from app.providers.synthetic_provider import SyntheticCorpus, generate_synthetic
from app.providers.vocabulary import Vocabulary, build_vocabulary

logger = get_logger(__name__)


def read_corpus(path: str | Path, num_classes: int, split: Split = Split.TRAIN) -> Corpus:
    return load_corpus(path, num_classes, split)


def write_corpus(corpus: Corpus, path: str | Path) -> Path:
    return save_corpus(corpus, path)


def synthesize(spec: SyntheticSpec, keep_gold: bool = True) -> SyntheticCorpus:
    return generate_synthetic(spec, keep_gold=keep_gold)


def prepare_inputs(
    corpora: Sequence[Corpus],
    embedding_dim: int,
    embeddings_path: str | Path | None,
    seed: int,
) -> tuple[Vocabulary, np.ndarray]:
    """
    Vocabulary over corpora and its embedding matrix.

    Pre-trained vectors are used when a word2vec file is given; every other
    row is drawn at random from the seed.
    """
    vocab = build_vocabulary(corpora)
    if embeddings_path is None:
        table = random_embeddings(vocab, embedding_dim, seed)
    else:
        table = load_embeddings(embeddings_path, vocab, dim=embedding_dim, seed=seed)
    logger.info("Vocabulary of %d tokens, embedding dim %d", len(vocab), table.dim)
    return vocab, table.matrix
