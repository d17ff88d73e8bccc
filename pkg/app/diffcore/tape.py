"""
Recording tape and reverse-mode gradient replay.

Primitives append a Node to the active tape while one is open. Recording
order is a topological order of the computation, so backward() replays the
nodes in reverse exactly once each.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import TapeError
from app.diffcore.tensor import ModelParams, Tensor

VJP = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_active_tape: ContextVar[Tape | None] = ContextVar("active_tape", default=None)


@dataclass
class Node:
    """One executed primitive."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


@dataclass
class Tape:
    """Ordered record of primitives executed while the tape was active."""

    watch: ModelParams | None = None
    nodes: list[Node] = field(default_factory=list)
    consumed: bool = False

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _active_tape.reset(self._token)

    def record(self, node: Node) -> None:
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)


def active_tape() -> Tape | None:
    return _active_tape.get()


@contextmanager
def no_recording() -> Iterator[None]:
    """Run primitives without recording, e.g. for evaluation passes."""
    token = _active_tape.set(None)
    try:
        yield
    finally:
        _active_tape.reset(token)


def backward(tape: Tape, loss: Tensor) -> dict[str, Tensor]:
    """
    Replay the tape in reverse and return d(loss)/d(parameter).

    Returns one gradient per trainable parameter watched by the tape, with
    the parameter's shape; parameters the loss never reached get zeros.

    Raises:
        TapeError: loss is not a scalar, or the tape was already replayed.
    """
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    if loss.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.vjp(upstream), strict=True):
            if grad is None:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad

    result: dict[str, Tensor] = {}
    if tape.watch is None:
        return result
    for param in tape.watch.trainable():
        grad = grads.get(id(param.tensor))
        if grad is None:
            grad = np.zeros(param.shape)
        result[param.name] = Tensor(grad)
    return result
