"""
Central finite-difference gradient checking.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from app.diffcore.tape import Tape, backward, no_recording
from app.diffcore.tensor import ModelParams, Tensor


@dataclass(frozen=True)
class ComponentCheck:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def relative_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric), 1e-6)
        return abs(self.analytic - self.numeric) / scale


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: ModelParams,
    n_components: int = 50,
    seed: int = 0,
    step: float = 1e-5,
) -> list[ComponentCheck]:
    """
    Compare backward() against central differences on random components.

    loss_fn must rebuild the loss from the current parameter values and be
    deterministic (evaluation mode).
    """
    with Tape(watch=params) as tape:
        loss = loss_fn()
    grads = backward(tape, loss)

    rng = np.random.default_rng(seed)
    trainable = params.trainable()
    sizes = np.array([param.tensor.size for param in trainable], dtype=float)
    checks: list[ComponentCheck] = []
    for _ in range(n_components):
        param = trainable[int(rng.choice(len(trainable), p=sizes / sizes.sum()))]
        flat = rng.integers(param.tensor.size)
        index = tuple(int(i) for i in np.unravel_index(flat, param.shape))
        original = param.tensor.numpy()

        shifted = original.copy()
        shifted[index] += step
        params.replace(param.name, shifted)
        with no_recording():
            upper = loss_fn().item()
        shifted[index] -= 2 * step
        params.replace(param.name, shifted)
        with no_recording():
            lower = loss_fn().item()
        params.replace(param.name, original)

        checks.append(
            ComponentCheck(
                name=param.name,
                index=index,
                analytic=float(grads[param.name].values[index]),
                numeric=(upper - lower) / (2 * step),
            )
        )
    return checks


def max_relative_error(checks: list[ComponentCheck]) -> float:
    return max(check.relative_error for check in checks)
