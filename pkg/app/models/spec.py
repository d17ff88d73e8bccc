"""
Model architecture and training configuration.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

DEFAULT_PATIENCE = 10


class ModelKind(str, Enum):
    """Every model family exposed by the CLI; keyword rules are evaluated, never trained."""

    MIL_SIGMOID = "mil-sigmoid"
    MIL_SOFTMAX = "mil-softmax"
    MIL_AVG = "mil-avg"
    REV_CNN = "rev-cnn"
    REV_RNN = "rev-rnn"
    REV_LR_EMB = "rev-lr-emb"
    REV_LR_BOW = "rev-lr-bow"
    SEG_LR = "seg-lr"
    KWRD1 = "kwrd1"
    KWRD2 = "kwrd2"

    @property
    def is_mil(self) -> bool:
        return self in MIL_KINDS

    @property
    def is_logreg(self) -> bool:
        return self in {ModelKind.REV_LR_EMB, ModelKind.REV_LR_BOW, ModelKind.SEG_LR}

    @property
    def is_keyword(self) -> bool:
        return self in {ModelKind.KWRD1, ModelKind.KWRD2}


class AggregationKind(str, Enum):
    UNIFORM = "uniform"
    SOFTMAX_ATTENTION = "softmax_attention"
    SIGMOID_ATTENTION = "sigmoid_attention"


MIL_KINDS: dict[ModelKind, AggregationKind] = {
    ModelKind.MIL_SIGMOID: AggregationKind.SIGMOID_ATTENTION,
    ModelKind.MIL_SOFTMAX: AggregationKind.SOFTMAX_ATTENTION,
    ModelKind.MIL_AVG: AggregationKind.UNIFORM,
}


class Nonlinearity(str, Enum):
    RELU = "relu"
    TANH = "tanh"


class ModelSpec(BaseModel):
    """Architecture of one model; written next to its checkpoint as JSON."""

    model_config = ConfigDict(extra="forbid")

    kind: ModelKind
    num_classes: int = Field(..., ge=2)
    vocab_size: int = Field(0, ge=0)
    vocab_digest: str = ""
    embedding_dim: int = Field(300, ge=1, description="k")
    kernel_widths: tuple[int, ...] = (3, 4, 5)
    feature_maps: int = Field(100, ge=1, description="F per kernel width")
    gru_hidden: int = Field(50, ge=1, description="Hidden size of each GRU direction")
    attention_dim: int = Field(100, ge=1, description="m")
    nonlinearity: Nonlinearity = Nonlinearity.RELU
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    train_embeddings: bool = True
    feature_dim: int = Field(0, ge=0, description="Input size of logistic regression models")
    decision_threshold: float | None = Field(
        None, ge=0.0, le=1.0, description="Tuned positive-class threshold (binary tasks)"
    )

    @property
    def aggregation(self) -> AggregationKind | None:
        return MIL_KINDS.get(self.kind)

    @property
    def segment_dim(self) -> int:
        """l, the CNN segment encoding size."""
        return len(self.kernel_widths) * self.feature_maps

    @property
    def context_dim(self) -> int:
        """n, the Bi-GRU output size."""
        return 2 * self.gru_hidden


class TrainConfig(BaseModel):
    """Optimization and early stopping settings."""

    model_config = ConfigDict(extra="forbid")

    max_epochs: int = Field(50, ge=1)
    patience: int = Field(DEFAULT_PATIENCE, ge=0)
    batch_size: int = Field(200, ge=1)
    learning_rate: float = Field(0.005, gt=0.0)
    rho: float = Field(0.95, ge=0.0, lt=1.0)
    epsilon: float = Field(1e-6, gt=0.0)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    l2: float = Field(1e-5, ge=0.0, description="L2 strength on the segment classifier")
    clip_norm: float | None = Field(None, gt=0.0)
    seed: int = 13
    # Logistic regression models (full-batch)
    logreg_learning_rate: float = Field(1.0, gt=0.0)
    logreg_max_iter: int = Field(5000, ge=1)
    logreg_tolerance: float = Field(1e-5, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def default_patience_below_max_epochs(cls, data: object) -> object:
        """An unset patience shrinks to max_epochs - 1 for short runs."""
        if isinstance(data, dict) and "patience" not in data and "max_epochs" in data:
            max_epochs = data["max_epochs"]
            if isinstance(max_epochs, int) and max_epochs >= 1:
                data = {**data, "patience": min(DEFAULT_PATIENCE, max_epochs - 1)}
        return data

    @model_validator(mode="after")
    def check_patience(self) -> "TrainConfig":
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        return self
