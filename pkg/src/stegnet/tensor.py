"""Parameter container and error types shared by the layer engine."""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when an array does not have the dimensions an op expects."""

    def __init__(self, what: str, expected, got):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class NumericalError(ArithmeticError):
    """Raised on NaN/Inf inputs or losses."""


def check_finite(x: np.ndarray, where: str) -> None:
    if not np.isfinite(x).all():
        raise NumericalError(f"non-finite values in {where}")


def check_rank4(x: np.ndarray, where: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{where} rank", "4 (n, c, h, w)", x.ndim)


class Tensor:
    """A numpy array plus an optional gradient buffer of the same shape.

    Feature maps flowing between layers are plain rank-4 ``(n, c, h, w)``
    arrays; ``Tensor`` is used for anything that owns a gradient, i.e.
    layer parameters.
    """

    def __init__(self, data, requires_grad: bool = True, dtype=None):
        self.data = np.array(data, dtype=dtype if dtype is not None else np.asarray(data).dtype)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"
