"""Interfaces shared by every review classifier."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Protocol

import numpy as np

from app.diffcore.tensor import ModelParams, Tensor
from app.models.corpus import Review
from app.models.spec import ModelSpec
from app.services.milnet import ReviewPrediction


class ReviewClassifier(Protocol):
    """Anything that predicts review and segment distributions."""

    spec: ModelSpec
    params: ModelParams

    def predict_many(self, reviews: Sequence[Review]) -> list[ReviewPrediction]: ...


class TrainableModel(ReviewClassifier, Protocol):
    """A classifier trained end to end by mini-batch Adadelta."""

    def forward_batch(
        self,
        reviews: Sequence[Review],
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor: ...

    def l2_penalty(self) -> Tensor: ...
