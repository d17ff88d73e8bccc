"""
Differentiable primitives.

Each primitive computes its output with numpy, validates it, and records a
Node with its vector-Jacobian product on the active tape (if any).
Operands that are plain numbers or arrays are treated as constants.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy import sparse

from app.core.errors import NumericalError, ShapeError
from app.diffcore.tape import VJP, Node, active_tape
from app.diffcore.tensor import Tensor

Operand = Tensor | float | int | np.ndarray


def _as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _finish(op: str, inputs: tuple[Tensor, ...], values: np.ndarray, vjp: VJP) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"{op}: produced non-finite values")
    out = Tensor(values)
    tape = active_tape()
    if tape is not None:
        tape.record(Node(op=op, inputs=inputs, output=out, vjp=vjp))
    return out


def _broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise arithmetic


def add(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast("add", a, b)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish("add", (a, b), a.values + b.values, vjp)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast("sub", a, b)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _finish("sub", (a, b), a.values - b.values, vjp)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast("mul", a, b)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _finish("mul", (a, b), a.values * b.values, vjp)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast("div", a, b)
    out = a.values / b.values

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * out / b.values, b.shape),
        )

    return _finish("div", (a, b), out, vjp)


def scale(a: Tensor, factor: float) -> Tensor:
    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * factor,)

    return _finish("scale", (a,), a.values * factor, vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; both operands need at least two axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.values, b.values)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = np.matmul(g, np.swapaxes(b.values, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _finish("matmul", (a, b), out, vjp)


# Nonlinearities


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * (1.0 - out**2),)

    return _finish("tanh", (a,), out, vjp)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.values)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * out * (1.0 - out),)

    return _finish("sigmoid", (a,), out, vjp)


def relu(a: Tensor) -> Tensor:
    active = a.values > 0

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * active,)

    return _finish("relu", (a,), np.where(active, a.values, 0.0), vjp)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * out,)

    return _finish("exp", (a,), out, vjp)


def log(a: Tensor) -> Tensor:
    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g / a.values,)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.values)
    return _finish("log", (a,), out, vjp)


def softmax(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """
    Softmax over the last axis.

    Positions where mask is False get weight exactly 0 (the score is treated
    as minus infinity). A row with every position masked yields all zeros.
    """
    x = a.values
    if mask is None:
        keep = np.ones(x.shape, dtype=bool)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    shifted = np.where(keep, x, -np.inf)
    row_max = shifted.max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    weights = np.where(keep, np.exp(np.where(keep, x - row_max, 0.0)), 0.0)
    total = weights.sum(axis=-1, keepdims=True)
    out = weights / np.where(total > 0, total, 1.0)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _finish("softmax", (a,), out, vjp)


# Convolution and pooling


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """
    Stride-1 valid convolution over the second-to-last axis.

    x has shape (..., L, k), kernel (w, k, F) and bias (F,); the output has
    shape (..., L - w + 1, F).
    """
    if kernel.ndim != 3 or x.ndim < 2 or x.shape[-1] != kernel.shape[1]:
        raise ShapeError("conv1d", x.shape, kernel.shape)
    if bias.shape != (kernel.shape[2],):
        raise ShapeError("conv1d", kernel.shape, bias.shape, detail="bias")
    width = kernel.shape[0]
    length = x.shape[-2]
    if length < width:
        raise ShapeError("conv1d", x.shape, kernel.shape, detail="input shorter than kernel")
    steps = length - width + 1

    out = np.broadcast_to(bias.values, x.shape[:-2] + (steps, kernel.shape[2])).copy()
    for offset in range(width):
        out += np.matmul(x.values[..., offset : offset + steps, :], kernel.values[offset])

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_x = np.zeros(x.shape)
        grad_k = np.zeros(kernel.shape)
        for offset in range(width):
            window = x.values[..., offset : offset + steps, :]
            grad_x[..., offset : offset + steps, :] += np.matmul(g, kernel.values[offset].T)
            grad_k[offset] = window.reshape(-1, window.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        grad_b = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return grad_x, grad_k, grad_b

    return _finish("conv1d", (x, kernel, bias), out, vjp)


def max_over_time(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """
    Max over the second-to-last axis, (..., T, F) -> (..., F).

    Positions where mask (shape (..., T)) is False are ignored; a row with no
    valid position pools to 0.
    """
    if x.ndim < 2:
        raise ShapeError("max_over_time", x.shape)
    values = x.values
    if mask is not None:
        valid = np.asarray(mask, dtype=bool)
        if valid.shape != values.shape[:-1]:
            raise ShapeError("max_over_time", values.shape, valid.shape, detail="mask")
        values = np.where(valid[..., None], values, -np.inf)
    index = np.argmax(values, axis=-2)[..., None, :]
    pooled = np.take_along_axis(values, index, axis=-2)[..., 0, :]
    empty = ~np.isfinite(pooled)
    pooled = np.where(empty, 0.0, pooled)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(x.shape)
        np.put_along_axis(grad, index, np.where(empty, 0.0, g)[..., None, :], axis=-2)
        return (grad,)

    return _finish("max_over_time", (x,), pooled, vjp)


# Indexing and structure


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: ids of any shape -> ids.shape + (k,)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("embedding", table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("embedding", table.shape, ids.shape, detail="index out of range")

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(table.shape)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return _finish("embedding", (table,), table.values[ids], vjp)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    arrays = [t.values for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in tensors)) from None
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return _finish("concat", tuple(tensors), out, vjp)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    try:
        out = np.stack([t.values for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("stack", *(t.shape for t in tensors)) from None

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.moveaxis(g, axis, 0))

    return _finish("stack", tuple(tensors), out, vjp)


def select(x: Tensor, index: int, axis: int) -> Tensor:
    """x[..., index, ...] along one axis, dropping that axis."""
    out = np.take(x.values, index, axis=axis)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(x.shape)
        slicer: list[slice | int] = [slice(None)] * x.ndim
        slicer[axis] = index
        grad[tuple(slicer)] = g
        return (grad,)

    return _finish("select", (x,), out, vjp)


def pick(x: Tensor, labels: np.ndarray) -> Tensor:
    """Gather x[..., labels[...]] along the last axis."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != x.shape[:-1]:
        raise ShapeError("pick", x.shape, labels.shape)
    index = labels[..., None]
    out = np.take_along_axis(x.values, index, axis=-1)[..., 0]

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(x.shape)
        np.put_along_axis(grad, index, g[..., None], axis=-1)
        return (grad,)

    return _finish("pick", (x,), out, vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return _finish("reshape", (x,), out, vjp)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise ShapeError("transpose", x.shape)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.swapaxes(g, -1, -2),)

    return _finish("transpose", (x,), np.swapaxes(x.values, -1, -2), vjp)


# Reductions


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _finish("sum", (x,), np.asarray(out), vjp)


def masked_sum(x: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Sum over axis counting only positions where mask is true."""
    axis = axis % x.ndim
    weights = np.asarray(mask, dtype=np.float64)
    while weights.ndim < x.ndim:
        weights = weights[..., None]
    return sum(mul(x, weights), axis=axis)


def masked_mean(x: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Mean over the masked positions; rows with no position give zeros."""
    axis = axis % x.ndim
    weights = np.asarray(mask, dtype=np.float64)
    count = np.maximum(weights.sum(axis=axis), 1.0)
    while count.ndim < x.ndim - 1:
        count = count[..., None]
    return div(masked_sum(x, mask, axis), count)


# Regularization


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """
    Inverted dropout: identity in evaluation mode, and in training mode
    surviving units are scaled by 1 / (1 - rate) so the expectation is x.
    """
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * keep,)

    return _finish("dropout", (x,), x.values * keep, vjp)


# Losses and sparse inputs


def log_softmax(a: Tensor) -> Tensor:
    """Log of the softmax over the last axis, without forming tiny probabilities."""
    x = a.values
    shifted = x - x.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _finish("log_softmax", (a,), out, vjp)


def sparse_matmul(x: sparse.spmatrix | sparse.sparray, w: Tensor) -> Tensor:
    """Constant sparse (n, d) matrix times a dense (d, F) tensor."""
    if w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError("sparse_matmul", tuple(x.shape), w.shape)
    matrix = sparse.csr_matrix(x)
    out = np.asarray(matrix @ w.values)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.asarray(matrix.T @ g),)

    return _finish("sparse_matmul", (w,), out, vjp)


def linear(x: Tensor, weight: Tensor) -> Tensor:
    """x @ weight.T for x of shape (..., d) and weight (F, d): -> (..., F)."""
    if weight.ndim != 2 or x.ndim < 1 or x.shape[-1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape)
    out = x.values @ weight.values.T

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_x = g @ weight.values
        grad_w = g.reshape(-1, g.shape[-1]).T @ x.values.reshape(-1, x.shape[-1])
        return grad_x, grad_w

    return _finish("linear", (x, weight), out, vjp)
