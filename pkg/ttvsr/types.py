from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np


class SizingError(ValueError):
    pass


class BoundsError(IndexError):
    pass


class PreconditionError(ValueError):
    pass


class FormatError(ValueError):
    pass


class WeightLoadError(FormatError):
    pass


class CounterDisabledError(RuntimeError):
    pass


class Coord(NamedTuple):
    row: float
    col: float


@dataclass(frozen=True)
class FeatureMap:
    """
    A dense channels x height x width grid, channel-major.

    The array is copied on construction and made read-only, so instances can
    be shared freely.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise SizingError(f"FeatureMap needs C x H x W, got shape {arr.shape}")
        if 0 in arr.shape:
            raise SizingError(f"FeatureMap has an empty dimension: {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("FeatureMap contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    @classmethod
    def constant(cls, value: float, channels: int, height: int, width: int) -> FeatureMap:
        return cls(np.full((channels, height, width), value, dtype=np.float64))


@dataclass(frozen=True)
class TokenGrid:
    """
    A grid_h x grid_w grid of tokens, each the channel-major flattening of a
    C x kernel_h x kernel_w patch.
    """

    tokens: np.ndarray = field(repr=False)
    channels: int
    kernel: Tuple[int, int]
    stride: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.tokens, dtype=np.float64)
        if arr.ndim != 3:
            raise SizingError(f"TokenGrid needs gh x gw x len, got shape {arr.shape}")
        kh, kw = self.kernel
        if arr.shape[2] != self.channels * kh * kw:
            raise SizingError(
                f"token length {arr.shape[2]} != channels {self.channels} x kernel {kh}x{kw}"
            )
        object.__setattr__(self, "tokens", arr)

    @property
    def grid_h(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def grid_w(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def token_len(self) -> int:
        return int(self.tokens.shape[2])

    def token(self, i: int, j: int) -> np.ndarray:
        if not (0 <= i < self.grid_h and 0 <= j < self.grid_w):
            raise BoundsError(f"cell ({i}, {j}) outside {self.grid_h}x{self.grid_w} grid")
        return self.tokens[i, j]
