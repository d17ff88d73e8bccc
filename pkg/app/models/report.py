"""
Report models: corpus statistics, training logs and evaluation reports.
"""

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ClassStats(BaseModel):
    """Witness statistics for one class."""

    label: int
    segment_share: float = Field(..., ge=0, le=1, description="Share of all gold segments")
    reviews: int = Field(..., ge=0)
    witness: float | None = Field(
        None, description="Mean segments labeled x per review labeled x"
    )
    witness_rate: float | None = Field(
        None, ge=0, le=1, description="Segments labeled x / segments in reviews labeled x"
    )


class CorpusStats(BaseModel):
    """Per-class witness statistics keyed by class label."""

    num_reviews: int
    num_segments: int
    classes: dict[str, ClassStats]
    salient: ClassStats | None = None


class EpochLog(BaseModel):
    """One line of the training log."""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "epoch": 3,
                "train_loss": 0.41,
                "val_loss": 0.44,
                "val_macro_f1": 0.81,
                "improved": True,
            }
        }
    )

    epoch: int = Field(..., ge=1)
    train_loss: float
    val_loss: float
    val_macro_f1: float = Field(..., ge=0, le=1)
    improved: bool


class ConfidenceInterval(BaseModel):
    low: float = Field(..., ge=0, le=1)
    high: float = Field(..., ge=0, le=1)


class LevelMetrics(BaseModel):
    """Metrics at review or segment level."""

    precision: float = Field(..., ge=0, le=1)
    recall: float = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0, le=1)
    accuracy: float | None = Field(None, ge=0, le=1)
    aupr: float | None = Field(None, ge=0, le=1)
    macro_f1: float | None = Field(None, ge=0, le=1)
    f1_ci: ConfidenceInterval | None = None
    aupr_ci: ConfidenceInterval | None = None
    zero_division: bool = Field(False, description="A precision/recall denominator was 0")

    @model_validator(mode="after")
    def check_intervals(self) -> "LevelMetrics":
        for interval in (self.f1_ci, self.aupr_ci):
            if interval is not None and interval.low > interval.high:
                raise ValueError("confidence interval is inverted")
        return self


class ThresholdFold(BaseModel):
    fold: int
    t1: float = Field(..., ge=-1, le=1)
    t2: float = Field(..., ge=-1, le=1)
    train_macro_f1: float = Field(..., ge=0, le=1)
    test_macro_f1: float = Field(..., ge=0, le=1)


class ThreeClassReport(BaseModel):
    """Polarity mapping + gated thresholds evaluated by cross-validation."""

    num_classes: int
    polarity_weights: list[float]
    folds: list[ThresholdFold]
    mean_macro_f1: float = Field(..., ge=0, le=1)


class CrossValidationReport(BaseModel):
    """Held-out macro-F1 of logistic regression refit on k folds of the test segments."""

    folds: int = Field(..., ge=2)
    num_classes: int = Field(..., ge=2)
    fold_macro_f1: list[float]
    mean_macro_f1: float = Field(..., ge=0, le=1)


class EvalReport(BaseModel):
    """Everything cmd_eval reports for one model on one test corpus."""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "model": "mil-sigmoid",
                "mode": "binary",
                "review": {"precision": 0.86, "recall": 0.93, "f1": 0.9},
                "segment": {"precision": 0.76, "recall": 0.87, "f1": 0.82},
            }
        }
    )

    model: str
    mode: str = Field(..., description="binary or three-class")
    review: LevelMetrics | None = None
    segment: LevelMetrics | None = None
    three_class: ThreeClassReport | None = None
    cross_validation: CrossValidationReport | None = None
    aggregation_fallbacks: int = Field(0, ge=0)
