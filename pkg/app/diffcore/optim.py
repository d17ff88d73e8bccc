"""
Adadelta optimizer.

Per parameter it keeps running averages of squared gradients and squared
updates:

    accum        = rho * accum + (1 - rho) * g**2
    update       = sqrt(accum_update + eps) / sqrt(accum + eps) * g
    accum_update = rho * accum_update + (1 - rho) * update**2
    param       -= learning_rate * update
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import ShapeError
from app.diffcore.tensor import ModelParams, Tensor


@dataclass
class AdadeltaState:
    """Accumulators for one model's trainable parameters."""

    rho: float = 0.95
    epsilon: float = 1e-6
    learning_rate: float = 0.005
    clip_norm: float | None = None
    accum: dict[str, np.ndarray] = field(default_factory=dict)
    accum_update: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.epsilon <= 0 or self.learning_rate <= 0:
            raise ValueError("epsilon and learning_rate must be positive")

    @classmethod
    def for_params(cls, params: ModelParams, **kwargs: float | None) -> AdadeltaState:
        state = cls(**kwargs)  # type: ignore[arg-type]
        for param in params.trainable():
            state.accum[param.name] = np.zeros(param.shape)
            state.accum_update[param.name] = np.zeros(param.shape)
        return state


def _global_norm(grads: Mapping[str, Tensor]) -> float:
    return float(np.sqrt(np.sum([np.sum(g.values**2) for g in grads.values()])))


def adadelta_step(
    params: ModelParams,
    grads: Mapping[str, Tensor],
    state: AdadeltaState,
) -> ModelParams:
    """
    Apply one Adadelta update to every trainable parameter in place.

    Raises:
        KeyError: a trainable parameter has no gradient.
        ShapeError: a gradient does not match its accumulator.
    """
    factor = 1.0
    if state.clip_norm is not None:
        norm = _global_norm(grads)
        if norm > state.clip_norm:
            factor = state.clip_norm / norm

    for param in params.trainable():
        if param.name not in grads:
            raise KeyError(f"Missing gradient for parameter {param.name}")
        grad = grads[param.name].values * factor
        accum = state.accum.setdefault(param.name, np.zeros(param.shape))
        accum_update = state.accum_update.setdefault(param.name, np.zeros(param.shape))
        if grad.shape != accum.shape:
            raise ShapeError("adadelta_step", grad.shape, accum.shape, detail=param.name)

        accum *= state.rho
        accum += (1.0 - state.rho) * grad**2
        update = np.sqrt(accum_update + state.epsilon) / np.sqrt(accum + state.epsilon) * grad
        accum_update *= state.rho
        accum_update += (1.0 - state.rho) * update**2

        params.replace(param.name, param.tensor.values - state.learning_rate * update)

    state.steps += 1
    return params
