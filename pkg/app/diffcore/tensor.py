"""
Tensors and named parameters.

A Tensor is an immutable dense float64 array. Gradients never live on the
tensor itself; they are accumulated by the Tape that recorded the
computation, so tensors can be shared read-only between threads.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from app.core.errors import ShapeError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


class Tensor:
    """Immutable float64 array participating in differentiable computation."""

    __slots__ = ("values",)

    def __init__(self, values: ArrayLike):
        array = np.array(values, dtype=np.float64)
        array.setflags(write=False)
        self.values: NDArray[np.float64] = array

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape, detail="tensor is not a scalar")
        return float(self.values.reshape(()))

    def numpy(self) -> NDArray[np.float64]:
        """Return a writable copy of the values."""
        return self.values.copy()

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> Tensor:
        return cls(np.zeros(shape))

    # Operator sugar; the primitives live in app.diffcore.ops.

    def __add__(self, other: Tensor | float) -> Tensor:
        from app.diffcore import ops

        return ops.add(self, other)

    def __radd__(self, other: float) -> Tensor:
        from app.diffcore import ops

        return ops.add(other, self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from app.diffcore import ops

        return ops.sub(self, other)

    def __rsub__(self, other: float) -> Tensor:
        from app.diffcore import ops

        return ops.sub(other, self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from app.diffcore import ops

        return ops.mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        from app.diffcore import ops

        return ops.mul(other, self)

    def __truediv__(self, other: Tensor | float) -> Tensor:
        from app.diffcore import ops

        return ops.div(self, other)

    def __rtruediv__(self, other: float) -> Tensor:
        from app.diffcore import ops

        return ops.div(other, self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from app.diffcore import ops

        return ops.matmul(self, other)

    def __neg__(self) -> Tensor:
        from app.diffcore import ops

        return ops.scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


@dataclass
class Parameter:
    """A named tensor owned by a model."""

    name: str
    tensor: Tensor
    trainable: bool = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape


@dataclass
class ModelParams:
    """Ordered collection of parameters with unique names."""

    _params: dict[str, Parameter] = field(default_factory=dict)

    def add(self, name: str, values: ArrayLike, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise ValueError(f"Duplicate parameter name: {name}")
        param = Parameter(name=name, tensor=Tensor(values), trainable=trainable)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name].tensor

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def parameter(self, name: str) -> Parameter:
        return self._params[name]

    def trainable(self) -> list[Parameter]:
        return [param for param in self._params.values() if param.trainable]

    def replace(self, name: str, values: ArrayLike) -> None:
        """Swap in new values for a parameter, keeping its shape."""
        param = self._params[name]
        new = Tensor(values)
        if new.shape != param.shape:
            raise ShapeError("replace", param.shape, new.shape, detail=name)
        param.tensor = new

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: param.tensor.numpy() for name, param in self._params.items()}

    def restore(self, values: Mapping[str, Any]) -> None:
        for name, array in values.items():
            self.replace(name, array)
