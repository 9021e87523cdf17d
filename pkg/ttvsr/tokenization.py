"""
Cross-scale feature tokenization.

Each base x base cell is described by patches of several receptive fields
(kernels larger than the base are centered on the cell with symmetric zero
padding).  Every patch is average-pooled down to base x base and the scales
are averaged element-wise, so tokens keep a uniform length.
"""

import logging
from typing import Sequence

import numpy as np

from .tensor_ops import as_array, fold, kernel_pair, KernelLike, MapLike, sample_grid, unfold
from .types import FeatureMap, PreconditionError, SizingError, TokenGrid

LOG = logging.getLogger(__name__)

DEFAULT_KERNELS = (4, 6, 8)


def bin_matrix(kernel: int, base: int) -> np.ndarray:
    """base x kernel 0/1 matrix; bin b covers [b*k//base, (b+1)*k//base)."""
    mat = np.zeros((base, kernel))
    for b in range(base):
        mat[b, (b * kernel) // base : ((b + 1) * kernel) // base] = 1.0
    return mat


def cross_scale_tokenize(
    f: MapLike, kernels: Sequence[int] = DEFAULT_KERNELS, base: int = 4
) -> TokenGrid:
    data = as_array(f)
    c, h, w = data.shape
    if base < 1 or h % base or w % base:
        raise SizingError(f"base {base} does not divide {h}x{w}")
    if not kernels:
        raise PreconditionError("cross_scale_tokenize needs at least one kernel")
    gh, gw = h // base, w // base
    ones = np.ones((1, h, w))

    total = np.zeros((gh, gw, c, base, base))
    count = np.zeros((gh, gw, 1, base, base))
    for k in kernels:
        if k < base:
            raise PreconditionError(f"kernel {k} smaller than base {base}")
        pad = -(-(k - base) // 2)
        grid = unfold(data, k, base, pad)
        if (grid.grid_h, grid.grid_w) != (gh, gw):
            raise SizingError(
                f"kernel {k} gives a {grid.grid_h}x{grid.grid_w} grid, expected {gh}x{gw}"
            )
        # Padding positions are counted out so bins average real pixels only.
        valid = unfold(ones, k, base, pad).tokens.reshape(gh, gw, 1, k, k)
        patches = grid.tokens.reshape(gh, gw, c, k, k)
        bins = bin_matrix(k, base)
        sums = np.einsum("bi,ghcij,dj->ghcbd", bins, patches, bins)
        counts = np.einsum("bi,ghcij,dj->ghcbd", bins, valid, bins)
        has = counts > 0
        total += np.where(has, sums / np.where(has, counts, 1.0), 0.0)
        count += has

    # Bins that only ever saw padding take the plain base-size patch.
    plain = unfold(data, base, base, 0).tokens.reshape(gh, gw, c, base, base)
    fused = np.where(count > 0, total / np.maximum(count, 1.0), plain)
    return TokenGrid(fused.reshape(gh, gw, c * base * base), c, (base, base), base)


def cross_scale_map(
    f: MapLike, kernels: Sequence[int] = DEFAULT_KERNELS, base: int = 4
) -> FeatureMap:
    """Cross-scale tokens folded back into a map of the input's size."""
    data = as_array(f)
    return fold(cross_scale_tokenize(data, kernels, base), data.shape[1], data.shape[2], base, base)


def tokens_from_map_at(f: MapLike, centers: Sequence, kernel: KernelLike) -> np.ndarray:
    """
    Bilinearly sampled patches around (possibly fractional) centers.  Patch
    cell (i, j) is read at center + (i, j) - ((kh-1)/2, (kw-1)/2), clamped to
    the map.  Returns an N x (C*kh*kw) array, channel-major per token.
    """
    data = as_array(f)
    kh, kw = kernel_pair(kernel)
    if kh < 1 or kw < 1:
        raise SizingError(f"kernel must be positive, got {kh}x{kw}")
    pts = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    oi = np.arange(kh) - (kh - 1) / 2
    oj = np.arange(kw) - (kw - 1) / 2
    rows = pts[:, 0, None, None] + oi[None, :, None] + np.zeros((1, 1, kw))
    cols = pts[:, 1, None, None] + oj[None, None, :] + np.zeros((1, kh, 1))
    samples = sample_grid(data, rows, cols)
    return samples.transpose(1, 0, 2, 3).reshape(pts.shape[0], data.shape[0] * kh * kw)
