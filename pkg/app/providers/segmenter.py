"""
Rule-based sentence segmentation and tokenization.

A sentence ends at a run of '.', '!' or '?' (optionally followed by closing
quotes or brackets) when the next non-space character starts a capitalized
word, or at the end of the text. A period after a known abbreviation or a
single-letter initial does not end a sentence.

Tokens are lowercased runs of letters and digits; an apostrophe between two
such runs stays inside the token, so contractions like "don't" are kept.
"""

import re

from app.core.errors import CorpusFormatError
from app.models.corpus import Segment

ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "mt", "st", "jr", "sr", "prof", "rev", "gen",
        "vs", "etc", "e.g", "i.e", "inc", "ltd", "co", "corp", "no", "approx",
        "ave", "blvd", "dept", "est", "fig", "jan", "feb", "mar", "apr", "jun",
        "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    }
)  # fmt: skip

_BOUNDARY = re.compile(r"""[.!?]+["')\]]*(?=\s+["'(\[]?[A-Z]|\s*$)""")
_PRECEDING_WORD = re.compile(r"(\S+)$")
_TOKEN = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries, keeping contractions."""
    normalized = text.replace("’", "'").replace("‘", "'").lower()
    return _TOKEN.findall(normalized)


def _is_guarded(text: str, boundary: re.Match[str]) -> bool:
    if boundary.group() != ".":
        return False
    preceding = _PRECEDING_WORD.search(text[: boundary.start()])
    if preceding is None:
        return False
    word = preceding.group(1).lstrip("\"'([").lower()
    if word in ABBREVIATIONS:
        return True
    # Single-letter initials such as "J. Smith".
    return len(word) == 1 and word.isalpha() and boundary.end() < len(text.rstrip())


def split_sentences(text: str) -> list[str]:
    """Split text into sentence strings without dropping any character."""
    pieces: list[str] = []
    start = 0
    for boundary in _BOUNDARY.finditer(text):
        if _is_guarded(text, boundary):
            continue
        piece = text[start : boundary.end()].strip()
        if piece:
            pieces.append(piece)
        start = boundary.end()
    tail = text[start:].strip()
    if tail:
        pieces.append(tail)
    return pieces


def segment_sentences(text: str) -> list[Segment]:
    """
    Segment review text into sentences.

    Sentences without any token (e.g. a lone "!!!") are merged into the
    preceding sentence, or the following one at the start of the text.

    Raises:
        CorpusFormatError: the text contains no token at all.
    """
    merged: list[str] = []
    pending = ""
    for piece in split_sentences(text):
        if not tokenize(piece):
            if merged:
                merged[-1] = f"{merged[-1]} {piece}"
            else:
                pending = f"{pending} {piece}".strip()
            continue
        merged.append(f"{pending} {piece}".strip() if pending else piece)
        pending = ""
    if not merged:
        raise CorpusFormatError("text contains no tokens")
    return [Segment(tokens=tuple(tokenize(piece)), raw_text=piece) for piece in merged]
