"""Pydantic models for corpus files, model specs, configs and reports."""

from app.models.corpus import Corpus, Review, Segment, Split, SyntheticSpec
from app.models.report import (
    ClassStats,
    ConfidenceInterval,
    CorpusStats,
    CrossValidationReport,
    EpochLog,
    EvalReport,
    LevelMetrics,
    ThreeClassReport,
    ThresholdFold,
)
from app.models.run import (
    AvgAttention,
    EvalMode,
    EvalRunConfig,
    HighlightFormat,
    HighlightRunConfig,
    StatsRunConfig,
    SynthRunConfig,
    TrainRunConfig,
    load_run_config,
)
from app.models.spec import AggregationKind, ModelKind, ModelSpec, Nonlinearity, TrainConfig

__all__ = [
    # Corpus models
    "Corpus",
    "Review",
    "Segment",
    "Split",
    "SyntheticSpec",
    # Model specs
    "AggregationKind",
    "ModelKind",
    "ModelSpec",
    "Nonlinearity",
    "TrainConfig",
    # Reports
    "ClassStats",
    "ConfidenceInterval",
    "CorpusStats",
    "CrossValidationReport",
    "EpochLog",
    "EvalReport",
    "LevelMetrics",
    "ThreeClassReport",
    "ThresholdFold",
    # Run configs
    "AvgAttention",
    "EvalMode",
    "EvalRunConfig",
    "HighlightFormat",
    "HighlightRunConfig",
    "StatsRunConfig",
    "SynthRunConfig",
    "TrainRunConfig",
    "load_run_config",
]
