"""Float32 tensor type and the order-pinned linear primitives.

All engine arithmetic is IEEE-754 single precision on row-major arrays.
``matmul`` accumulates every output cell in strictly ascending inner-index
order, which makes results bitwise reproducible across runs and across the
numba/numpy backends; this is the property the rest of the system (bit-exact
mode equivalence, trace replay) is built on.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from . import backends
from .errors import ShapeError

Shape = tuple  # tuple of ints, 1 to 4 dims

MAX_DIMS = 4


def check_shape(shape) -> tuple:
    shape = tuple(int(d) for d in shape)
    if not 1 <= len(shape) <= MAX_DIMS:
        raise ShapeError(f"rank must be 1..{MAX_DIMS}, got {len(shape)}")
    if any(d <= 0 for d in shape):
        raise ShapeError(f"dimensions must be positive, got {shape}")
    return shape


class Tensor:
    """Immutable row-major float32 array.

    The backing buffer is marked read-only; kernels that mutate data in place
    operate on executor-owned scratch copies, never on a ``Tensor``.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        check_shape(arr.shape)
        arr = arr.copy() if arr is data else arr
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.all(self.data == other.data))

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


TensorLike = Union[Tensor, np.ndarray, Sequence]


def tensor(data: TensorLike) -> Tensor:
    """Build a Tensor from nested sequences or an array (copied, cast to f32)."""
    if isinstance(data, Tensor):
        return data
    return Tensor(np.asarray(data, dtype=np.float32))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(check_shape(shape), dtype=np.float32))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Strict-order matrix product of two rank-2 tensors."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return Tensor(backends.matmul(a.data, b.data))


def axpy_bias(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with the bias broadcast across rows."""
    if len(b.shape) != 1:
        raise ShapeError(f"bias must be rank 1, got {b.shape}")
    y = matmul(x, w)
    if b.shape[0] != y.shape[1]:
        raise ShapeError(f"bias length {b.shape[0]} != output width {y.shape[1]}")
    return Tensor(y.data + b.data[None, :])
