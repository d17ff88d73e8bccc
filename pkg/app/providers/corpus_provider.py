"""
Canonical corpus provider: JSONL review files.

Each line is one review: {"id", "label", "sample_weight"?, and either
"text" (segmented here) or "segments": [{"text", "gold_label"?}]}.
"""

from pathlib import Path

from pydantic import ValidationError

from app.core.errors import CorpusFormatError
from app.core.files import atomic_write_jsonl
from app.core.logging import get_logger
from app.models.corpus import Corpus, Review, ReviewRecord, Segment, SegmentRecord, Split
from app.providers.segmenter import segment_sentences, tokenize

logger = get_logger(__name__)


def _record_to_review(record: ReviewRecord, num_classes: int, line: int) -> Review:
    if record.label > num_classes:
        raise CorpusFormatError(
            f"label {record.label} out of range for {num_classes} classes", line=line
        )
    if record.segments is not None:
        segments = []
        for item in record.segments:
            tokens = tokenize(item.text)
            if not tokens:
                raise CorpusFormatError(f"segment {item.text!r} has no tokens", line=line)
            if item.gold_label is not None and item.gold_label > num_classes:
                raise CorpusFormatError(
                    f"segment label {item.gold_label} out of range for {num_classes} classes",
                    line=line,
                )
            segments.append(
                Segment(tokens=tuple(tokens), raw_text=item.text, gold_label=item.gold_label)
            )
    else:
        try:
            segments = segment_sentences(record.text or "")
        except CorpusFormatError as exc:
            raise CorpusFormatError(exc.message, line=line) from exc
    return Review(
        id=record.id,
        segments=tuple(segments),
        label=record.label,
        sample_weight=record.sample_weight,
    )


def load_corpus(path: str | Path, num_classes: int, split: Split = Split.TRAIN) -> Corpus:
    """
    Load a JSONL corpus in file order.

    Raises:
        CorpusFormatError: unreadable file, malformed line (with its number),
            label out of range, or an empty corpus.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusFormatError(f"cannot read corpus {path}: {exc}") from exc

    reviews: list[Review] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = ReviewRecord.model_validate_json(line)
        except ValidationError as exc:
            message = exc.errors()[0]["msg"]
            raise CorpusFormatError(f"malformed review: {message}", line=number) from exc
        reviews.append(_record_to_review(record, num_classes, number))

    if not reviews:
        raise CorpusFormatError("empty corpus")
    logger.info("Loaded %d reviews from %s (%s)", len(reviews), path, split.value)
    return Corpus(reviews=tuple(reviews), num_classes=num_classes, split=split)


def review_to_record(review: Review) -> ReviewRecord:
    return ReviewRecord(
        id=review.id,
        label=review.label,
        sample_weight=review.sample_weight,
        segments=[
            SegmentRecord(text=segment.raw_text, gold_label=segment.gold_label)
            for segment in review.segments
        ],
    )


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    """Write a corpus in the pre-segmented JSONL form load_corpus reads back."""
    rows = [
        review_to_record(review).model_dump(exclude_none=True) for review in corpus.reviews
    ]
    return atomic_write_jsonl(path, rows)
