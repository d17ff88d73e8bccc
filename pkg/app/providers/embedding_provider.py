"""
Canonical word-embedding provider.

Reads the word2vec text format: a header line "<count> <dim>" followed by
one "<token> <v1> ... <v_dim>" line per word. Rows of vocabulary tokens
missing from the file are drawn uniformly from [-0.25, 0.25] with the run
seed; the padding row is always zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.core.errors import EmbeddingFormatError
from app.core.logging import get_logger
from app.providers.vocabulary import PAD_INDEX, Vocabulary

logger = get_logger(__name__)

OOV_SCALE = 0.25


@dataclass
class EmbeddingTable:
    """|V| x k matrix aligned with a vocabulary."""

    matrix: np.ndarray
    pretrained: int = 0

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise EmbeddingFormatError(f"embedding matrix has invalid shape {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def num_rows(self) -> int:
        return int(self.matrix.shape[0])


def random_embeddings(vocab: Vocabulary, dim: int, seed: int) -> EmbeddingTable:
    """Uniform [-0.25, 0.25] rows for every token, zero padding row."""
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-OOV_SCALE, OOV_SCALE, size=(len(vocab), dim))
    matrix[PAD_INDEX] = 0.0
    return EmbeddingTable(matrix=matrix)


def _parse_header(line: str) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2 or not all(part.isdigit() for part in parts):
        raise EmbeddingFormatError("header must be '<count> <dim>'", line=1)
    count, dim = int(parts[0]), int(parts[1])
    if dim < 1:
        raise EmbeddingFormatError("embedding dimension must be positive", line=1)
    return count, dim


def load_embeddings(
    path: str | Path,
    vocab: Vocabulary,
    dim: int | None = None,
    seed: int = 0,
) -> EmbeddingTable:
    """
    Build an embedding table for vocab from a word2vec text file.

    Args:
        path: word2vec text file.
        vocab: Vocabulary the rows are aligned with.
        dim: Expected dimension k; None accepts the file's dimension.
        seed: Seed for out-of-vocabulary rows.

    Raises:
        EmbeddingFormatError: unreadable file, dimension mismatch, or a
            malformed line (with its line number).
    """
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise EmbeddingFormatError(f"cannot read embeddings {path}: {exc}") from exc

    with handle:
        header = handle.readline()
        _, file_dim = _parse_header(header)
        if dim is not None and dim != file_dim:
            raise EmbeddingFormatError(
                f"embedding dimension {file_dim} does not match configured k={dim}", line=1
            )
        table = random_embeddings(vocab, file_dim, seed)
        matrix = table.matrix
        found = 0
        for number, line in enumerate(handle, start=2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if len(parts) != file_dim + 1:
                raise EmbeddingFormatError(
                    f"expected {file_dim} values, got {len(parts) - 1}", line=number
                )
            token = parts[0]
            if token not in vocab:
                continue
            try:
                row = np.array([float(value) for value in parts[1:]])
            except ValueError as exc:
                raise EmbeddingFormatError(f"non-numeric value: {exc}", line=number) from exc
            index = vocab.index(token)
            if index == PAD_INDEX:
                continue
            matrix[index] = row
            found += 1

    logger.info(
        "Loaded %d/%d pretrained rows from %s; %d rows randomly initialized",
        found,
        len(vocab) - 1,
        path,
        len(vocab) - 1 - found,
    )
    return EmbeddingTable(matrix=matrix, pretrained=found)
