"""
Canonical vocabulary provider.

Index 0 is padding and index 1 stands for unknown tokens. Remaining tokens
are ordered by descending frequency, then lexicographically, so the same
corpus always yields the same indices and digest.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.core.errors import CorpusFormatError
from app.core.files import atomic_write_json
from app.core.logging import get_logger
from app.models.corpus import Corpus

logger = get_logger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


@dataclass
class Vocabulary:
    """Dense token -> index map with reserved padding and unknown rows."""

    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the padding and unknown tokens")
        self._index = {token: i for i, token in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index(token) for token in tokens], dtype=np.int64)

    def digest(self) -> str:
        """SHA-256 of the ordered token list."""
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict[str, object]:
        return {"tokens": self.tokens, "digest": self.digest()}

    def save(self, path: str | Path) -> Path:
        return atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            vocab = cls(tokens=list(payload["tokens"]))
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"cannot read vocabulary {path}: {exc}") from exc
        if payload.get("digest", vocab.digest()) != vocab.digest():
            raise CorpusFormatError(f"vocabulary {path} does not match its digest")
        return vocab


def build_vocabulary(corpora: Iterable[Corpus], min_count: int = 1) -> Vocabulary:
    """Collect every token seen at least min_count times across the corpora."""
    counts: Counter[str] = Counter()
    for corpus in corpora:
        for review in corpus.reviews:
            counts.update(review.tokens)
    kept = sorted(
        (token for token, count in counts.items() if count >= min_count),
        key=lambda token: (-counts[token], token),
    )
    vocab = Vocabulary(tokens=[PAD_TOKEN, UNK_TOKEN, *kept])
    logger.info("Built vocabulary of %d tokens (min_count=%d)", len(vocab), min_count)
    return vocab
