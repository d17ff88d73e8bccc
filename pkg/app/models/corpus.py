"""
Review corpus models.

A review is a MIL bag of segments. Labels are 1-based class indices as they
appear in corpus files; numeric code converts to 0-based at the boundary.
"""

from enum import Enum

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationInfo,
    field_validator,
    model_validator,
)


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class Segment(BaseModel):
    """One sentence (MIL instance) of a review."""

    model_config = ConfigDict(frozen=True)

    tokens: tuple[str, ...] = Field(..., min_length=1, description="Lowercased tokens")
    raw_text: str = Field(..., description="Original segment text")
    gold_label: int | None = Field(
        None, ge=1, description="Segment label, only present on test corpora"
    )


class Review(BaseModel):
    """A labeled review (MIL bag)."""

    model_config = ConfigDict(frozen=True)

    id: str
    segments: tuple[Segment, ...] = Field(..., min_length=1)
    label: int = Field(..., ge=1, description="Review label in [1..C]")
    sample_weight: float = Field(1.0, ge=0.0)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def tokens(self) -> tuple[str, ...]:
        """All tokens of the review, segment after segment."""
        return tuple(token for segment in self.segments for token in segment.tokens)

    @property
    def text(self) -> str:
        return " ".join(segment.raw_text for segment in self.segments)

    @property
    def has_gold(self) -> bool:
        return all(segment.gold_label is not None for segment in self.segments)


class Corpus(BaseModel):
    """Reviews of one split sharing a class count."""

    model_config = ConfigDict(frozen=True)

    reviews: tuple[Review, ...]
    num_classes: int = Field(..., ge=2)
    split: Split = Split.TRAIN

    @model_validator(mode="after")
    def check_labels(self) -> "Corpus":
        for review in self.reviews:
            if review.label > self.num_classes:
                raise ValueError(
                    f"review {review.id}: label {review.label} exceeds {self.num_classes} classes"
                )
            for segment in review.segments:
                if segment.gold_label is not None and segment.gold_label > self.num_classes:
                    raise ValueError(
                        f"review {review.id}: segment label {segment.gold_label} "
                        f"exceeds {self.num_classes} classes"
                    )
        return self

    def __len__(self) -> int:
        return len(self.reviews)

    @property
    def labels(self) -> list[int]:
        return [review.label for review in self.reviews]

    @property
    def has_gold(self) -> bool:
        return bool(self.reviews) and all(review.has_gold for review in self.reviews)

    def subset(self, indices: list[int], split: Split | None = None) -> "Corpus":
        return Corpus(
            reviews=tuple(self.reviews[i] for i in indices),
            num_classes=self.num_classes,
            split=split or self.split,
        )


class SyntheticSpec(BaseModel):
    """Parameters of a generated corpus with a controlled witness rate."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "num_reviews": 2000,
                "min_segments": 6,
                "max_segments": 10,
                "witness_rate": 0.25,
                "seed": 7,
            }
        },
    )

    num_reviews: int = Field(1000, ge=1, description="Training reviews to generate")
    validation_reviews: int = Field(200, ge=0)
    test_reviews: int = Field(500, ge=0)
    num_classes: int = Field(2, ge=2)
    background_class: int | None = Field(
        1, ge=1, description="Class whose reviews hold only background segments"
    )
    min_segments: int = Field(6, ge=1)
    max_segments: int = Field(10, ge=1)
    min_tokens: int = Field(4, ge=1)
    max_tokens: int = Field(10, ge=1)
    witness_rate: float = Field(0.25, gt=0.0, le=1.0)
    fixed_witnesses: int | None = Field(
        None, ge=1, description="Plant exactly this many witnesses per review"
    )
    indicative_vocab_size: int = Field(30, ge=1, description="Tokens per class vocabulary")
    background_vocab_size: int = Field(200, ge=1)
    noise_rate: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = 13

    @field_validator("max_segments")
    @classmethod
    def segments_range(cls, value: int, info: ValidationInfo) -> int:
        low = info.data.get("min_segments")
        if low is not None and value < low:
            raise ValueError("max_segments must be >= min_segments")
        return value

    @field_validator("max_tokens")
    @classmethod
    def tokens_range(cls, value: int, info: ValidationInfo) -> int:
        low = info.data.get("min_tokens")
        if low is not None and value < low:
            raise ValueError("max_tokens must be >= min_tokens")
        return value

    @model_validator(mode="after")
    def check_classes(self) -> "SyntheticSpec":
        if self.background_class is not None and self.background_class > self.num_classes:
            raise ValueError("background_class must be a valid class")
        return self


class SegmentRecord(BaseModel):
    """A pre-segmented sentence as stored in a corpus file."""

    model_config = ConfigDict(extra="forbid")

    text: str
    gold_label: int | None = Field(None, ge=1)


class ReviewRecord(BaseModel):
    """One JSONL line of a corpus file."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {"id": "r1", "label": 2, "segments": [{"text": "Great food."}]}
        },
    )

    id: str
    label: int = Field(..., ge=1)
    sample_weight: float = Field(1.0, ge=0.0)
    text: str | None = None
    segments: list[SegmentRecord] | None = Field(None, min_length=1)

    @model_validator(mode="after")
    def text_or_segments(self) -> "ReviewRecord":
        if (self.text is None) == (self.segments is None):
            raise ValueError("exactly one of 'text' or 'segments' is required")
        return self
