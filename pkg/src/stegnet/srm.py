"""The 30 fixed SRM high-pass kernels and the pre-processing convolution.

Kernels are integer valued and unnormalised, each embedded centred in a 5x5
grid.  Directional variants are produced by clockwise quarter turns of an
axial and a diagonal base kernel, so every class is listed clockwise starting
from east (E, SE, S, SW, W, NW, N, NE).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2d, same_pad
from .tensor import ShapeError, check_rank4

KERNEL_SIZE = 5
N_FILTERS = 30
_CLOCKWISE = ("E", "SE", "S", "SW", "W", "NW", "N", "NE")


def _embed(small) -> np.ndarray:
    small = np.asarray(small, dtype=np.float64)
    out = np.zeros((KERNEL_SIZE, KERNEL_SIZE))
    o = (KERNEL_SIZE - small.shape[0]) // 2
    out[o:o + small.shape[0], o:o + small.shape[1]] = small
    return out


def _turn(kernel: np.ndarray, quarter_turns: int) -> np.ndarray:
    # clockwise on an image grid with rows growing downwards
    return np.rot90(kernel, -quarter_turns)


def _eight_directions(axial: np.ndarray, diagonal: np.ndarray) -> list[np.ndarray]:
    out = []
    for t in range(4):
        out.append(_turn(axial, t))
        out.append(_turn(diagonal, t))
    return out


def _line(values, diagonal: bool) -> np.ndarray:
    """Place taps along the centre row (or main diagonal) starting at column 0."""
    k = np.zeros((KERNEL_SIZE, KERNEL_SIZE))
    for i, v in enumerate(values):
        if diagonal:
            k[i, i] = v
        else:
            k[2, i] = v
    return k


SQUARE_3X3 = np.array([[-1, 2, -1],
                       [2, -4, 2],
                       [-1, 2, -1]], dtype=np.float64)

SQUARE_5X5 = np.array([[-1, 2, -2, 2, -1],
                       [2, -6, 8, -6, 2],
                       [-2, 8, -12, 8, -2],
                       [2, -6, 8, -6, 2],
                       [-1, 2, -2, 2, -1]], dtype=np.float64)


def _edge_east(square: np.ndarray) -> np.ndarray:
    north = square.copy()
    north[KERNEL_SIZE // 2 + 1:, :] = 0
    return _turn(north, 1)


@dataclass(frozen=True)
class FilterBank:
    kernels: np.ndarray  # (30, 5, 5), read-only
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.kernels[self.names.index(name)]

    def weights(self, dtype=np.float32) -> np.ndarray:
        """Conv weight layout ``(30, 1, 5, 5)``."""
        return self.kernels[:, None, :, :].astype(dtype)

    def to_text(self) -> str:
        stanzas = []
        for name, k in zip(self.names, self.kernels):
            rows = "\n".join(" ".join(str(int(v)) for v in row) for row in k)
            stanzas.append(f"{name}\n{rows}\n")
        return "\n".join(stanzas)


def build_filter_bank() -> FilterBank:
    kernels: list[np.ndarray] = []
    names: list[str] = []

    def add(prefix, ks, directions):
        for d, k in zip(directions, ks):
            names.append(f"{prefix}_{d}" if d else prefix)
            kernels.append(k)

    # 1st order: x[i, j+1] - x[i, j]
    first_axial = _line([0, 0, -1, 1, 0], diagonal=False)
    first_diag = _line([0, 0, -1, 1, 0], diagonal=True)
    add("1st", _eight_directions(first_axial, first_diag), _CLOCKWISE)

    # 2nd order [1, -2, 1] along the four axes of symmetry
    second_axial = _line([0, 1, -2, 1, 0], diagonal=False)
    second_diag = _line([0, 1, -2, 1, 0], diagonal=True)
    add("2nd", _eight_directions(second_axial, second_diag)[:4], _CLOCKWISE[:4])

    # 3rd order: x[i, j-1] - 3 x[i, j] + 3 x[i, j+1] - x[i, j+2]
    third_axial = _line([0, 1, -3, 3, -1], diagonal=False)
    third_diag = _line([0, 1, -3, 3, -1], diagonal=True)
    add("3rd", _eight_directions(third_axial, third_diag), _CLOCKWISE)

    add("square3x3", [_embed(SQUARE_3X3)], [None])
    add("square5x5", [SQUARE_5X5.copy()], [None])

    # edge kernels keep the half (centre line included) of a square kernel
    # that faces the named direction
    edge3 = _edge_east(_embed(SQUARE_3X3))
    add("edge3x3", [_turn(edge3, t) for t in range(4)], _CLOCKWISE[::2])
    edge5 = _edge_east(SQUARE_5X5)
    add("edge5x5", [_turn(edge5, t) for t in range(4)], _CLOCKWISE[::2])

    stack = np.stack(kernels)
    stack.setflags(write=False)
    return FilterBank(kernels=stack, names=tuple(names))


def preprocess_layer(bank: FilterBank | None = None, dtype=np.float32) -> Conv2d:
    """Fixed (never learned) 5x5 convolution applying the bank with SAME padding."""
    if bank is None:
        bank = build_filter_bank()
    return Conv2d(bank.weights(dtype), stride=1, pad=same_pad(KERNEL_SIZE), learnable=False)


def preprocess(image: np.ndarray, bank: FilterBank | None = None) -> np.ndarray:
    """Map ``(n, 1, h, w)`` raw pixels to ``(n, 30, h, w)`` residuals."""
    check_rank4(image, "preprocess input")
    if image.shape[1] != 1:
        raise ShapeError("preprocess input channels", 1, image.shape[1])
    dtype = image.dtype if np.issubdtype(image.dtype, np.floating) else np.float64
    return preprocess_layer(bank, dtype).forward(image.astype(dtype, copy=False))
