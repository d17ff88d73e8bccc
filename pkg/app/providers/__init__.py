"""
Canonical data providers: the single source of corpora, vocabularies and
embeddings.

Services obtain review data only through these providers; the CLI reaches
them through app.services.data_service.
"""

from app.providers.corpus_provider import load_corpus, review_to_record, save_corpus
from app.providers.embedding_provider import EmbeddingTable, load_embeddings, random_embeddings
from app.providers.segmenter import segment_sentences, split_sentences, tokenize
from app.providers.synthetic_provider import SyntheticCorpus, generate_synthetic
from app.providers.vocabulary import (
    PAD_INDEX,
    UNK_INDEX,
    Vocabulary,
    build_vocabulary,
)

__all__ = [
    # Corpus files
    "load_corpus",
    "save_corpus",
    "review_to_record",
    # Text
    "segment_sentences",
    "split_sentences",
    "tokenize",
    # Vocabulary and embeddings
    "PAD_INDEX",
    "UNK_INDEX",
    "Vocabulary",
    "build_vocabulary",
    "EmbeddingTable",
    "load_embeddings",
    "random_embeddings",
    # Synthetic data
    "SyntheticCorpus",
    "generate_synthetic",
]
