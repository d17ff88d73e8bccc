"""
Run configuration models, one per CLI verb.

Values come from a TOML file and are overridden by command-line flags.
Unknown keys are rejected everywhere.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.config import settings
from app.core.errors import ConfigError
from app.models.corpus import SyntheticSpec
from app.models.spec import ModelKind, Nonlinearity, TrainConfig


class EvalMode(str, Enum):
    BINARY = "binary"
    THREE_CLASS = "three-class"


class AvgAttention(str, Enum):
    """Attention weight reported for MIL-avg when gating or ranking."""

    INVERSE_M = "inverse_m"
    ONE = "one"


class HighlightFormat(str, Enum):
    ANSI = "ansi"
    HTML = "html"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    run_dir: str | None = Field(None, description="Output directory; defaults under RUN_ROOT")


class SynthRunConfig(RunConfig):
    synthetic: SyntheticSpec = Field(default_factory=SyntheticSpec)
    keep_gold: bool = Field(
        True, description="Keep gold segment labels on the train and validation splits"
    )


class StatsRunConfig(RunConfig):
    corpus: str
    num_classes: int = Field(..., ge=2)
    background_class: int | None = Field(
        None, ge=1, description="Class excluded from the salient row"
    )


class ArchitectureConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    embedding_dim: int = Field(300, ge=1)
    kernel_widths: tuple[int, ...] = (3, 4, 5)
    feature_maps: int = Field(100, ge=1)
    gru_hidden: int = Field(50, ge=1)
    attention_dim: int = Field(100, ge=1)
    nonlinearity: Nonlinearity = Nonlinearity.RELU
    train_embeddings: bool = True


class TrainRunConfig(RunConfig):
    model: ModelKind = ModelKind.MIL_SIGMOID
    train: str
    validation: str | None = Field(
        None, description="Validation corpus; split off the training file when absent"
    )
    validation_fraction: float = Field(0.1, gt=0.0, lt=1.0)
    num_classes: int = Field(..., ge=2)
    embeddings: str | None = Field(None, description="word2vec text file")
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    tune_threshold: bool = Field(False, description="Tune the binary decision threshold on F1")

    @field_validator("model")
    @classmethod
    def check_trainable(cls, kind: ModelKind) -> ModelKind:
        if kind.is_keyword:
            raise ValueError(f"{kind.value} is a keyword rule; evaluate it with eval --baseline")
        return kind


class EvalRunConfig(RunConfig):
    model_dir: str | None = Field(None, description="Directory written by train")
    baseline: ModelKind | None = Field(None, description="Keyword rule evaluated instead")
    test: str
    mode: EvalMode = EvalMode.BINARY
    positive_class: int = Field(2, ge=1)
    folds: int = Field(10, ge=2)
    grid_step: float = Field(0.05, gt=0.0, le=1.0)
    avg_attention: AvgAttention = AvgAttention.INVERSE_M
    gold_polarity: bool = Field(
        True,
        description="Segment gold labels are polarity classes (1 neg, 2 neu, 3 pos); "
        "otherwise they are C-class labels mapped by the sign of their polarity weight",
    )
    bootstrap: bool = False
    bootstrap_iterations: int = Field(1000, ge=200)
    resample_size: int = Field(1000, ge=1)
    pr_curve: bool = False
    cv_folds: int | None = Field(
        None, ge=2, description="Cross-validate a seg-lr model on the test segments"
    )

    @model_validator(mode="after")
    def check_model_source(self) -> "EvalRunConfig":
        if (self.model_dir is None) == (self.baseline is None):
            raise ValueError("give exactly one of model_dir and baseline")
        if self.baseline is not None and not self.baseline.is_keyword:
            raise ValueError(f"baseline must be kwrd1 or kwrd2, not {self.baseline.value}")
        if self.baseline is not None and self.cv_folds is not None:
            raise ValueError("cv_folds needs a saved seg-lr model, not a keyword rule")
        return self


class HighlightRunConfig(RunConfig):
    model_dir: str
    reviews: str
    threshold: float = 0.1
    format: HighlightFormat = HighlightFormat.HTML


class RunManifest(BaseModel):
    """Written last into every run directory."""

    command: str
    config: dict[str, Any]
    outputs: dict[str, str] = Field(default_factory=dict, description="Path -> SHA-256")


ConfigT = TypeVar("ConfigT", bound=RunConfig)


def _set_dotted(target: dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = target
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"Cannot override {dotted}: {key} is not a table")
    node[leaf] = value


def load_run_config(
    config_cls: type[ConfigT],
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> ConfigT:
    """
    Build a run config from a TOML file plus dotted-key overrides.

    Raises:
        ConfigError: unreadable file, unknown keys or invalid values.
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                values = tomllib.load(handle)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(values, dotted, value)
    try:
        return config_cls.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"Invalid {config_cls.__name__}: {exc}") from exc
