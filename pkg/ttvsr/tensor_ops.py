"""
Dense tensor primitives on C x H x W feature maps.

Functions accept either a FeatureMap or a raw C x H x W array; anything that
produces a map returns a FeatureMap so the finiteness check runs on every
result.
"""

import logging
from typing import Literal, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .types import Coord, FeatureMap, SizingError, TokenGrid

LOG = logging.getLogger(__name__)

MapLike = Union[FeatureMap, np.ndarray]
KernelLike = Union[int, Tuple[int, int]]

# Catmull-Rom member of the cubic convolution family.
BICUBIC_A = -0.5


def as_array(f: MapLike) -> np.ndarray:
    arr = f.data if isinstance(f, FeatureMap) else np.asarray(f, dtype=np.float64)
    if arr.ndim != 3:
        raise SizingError(f"expected C x H x W, got shape {arr.shape}")
    return arr


def kernel_pair(kernel: KernelLike) -> Tuple[int, int]:
    if isinstance(kernel, int):
        return (kernel, kernel)
    kh, kw = kernel
    return (int(kh), int(kw))


def grid_size(extent: int, kernel: int, stride: int, zero_pad: int) -> int:
    return (extent + 2 * zero_pad - kernel) // stride + 1


def unfold(f: MapLike, kernel: int, stride: int, zero_pad: int = 0) -> TokenGrid:
    data = as_array(f)
    c, h, w = data.shape
    if kernel < 1 or stride < 1 or zero_pad < 0:
        raise SizingError(
            f"bad unfold parameters kernel={kernel} stride={stride} pad={zero_pad}"
        )
    if h + 2 * zero_pad < kernel or w + 2 * zero_pad < kernel:
        raise SizingError(
            f"padded extent {h + 2 * zero_pad}x{w + 2 * zero_pad} smaller than kernel {kernel}"
        )
    if zero_pad:
        data = np.pad(data, ((0, 0), (zero_pad, zero_pad), (zero_pad, zero_pad)))
    gh = grid_size(h, kernel, stride, zero_pad)
    gw = grid_size(w, kernel, stride, zero_pad)
    # (C, H', W', k, k) -> (gh, gw, C, k, k)
    windows = sliding_window_view(data, (kernel, kernel), axis=(1, 2))
    windows = windows[:, : (gh - 1) * stride + 1 : stride, : (gw - 1) * stride + 1 : stride]
    tokens = windows.transpose(1, 2, 0, 3, 4).reshape(gh, gw, c * kernel * kernel)
    return TokenGrid(np.ascontiguousarray(tokens), c, (kernel, kernel), stride)


def fold(
    tg: TokenGrid, out_h: int, out_w: int, kernel: int, stride: int, zero_pad: int = 0
) -> FeatureMap:
    """
    Adjoint of unfold: every output pixel is the sum of all token elements
    that map onto it.  Contributions landing in the padding are dropped.
    """
    gh = grid_size(out_h, kernel, stride, zero_pad)
    gw = grid_size(out_w, kernel, stride, zero_pad)
    if (tg.grid_h, tg.grid_w) != (gh, gw):
        raise SizingError(
            f"token grid {tg.grid_h}x{tg.grid_w} does not match {gh}x{gw} for "
            f"output {out_h}x{out_w}, kernel={kernel}, stride={stride}, pad={zero_pad}"
        )
    if tg.token_len % (kernel * kernel):
        raise SizingError(f"token length {tg.token_len} not divisible by {kernel}x{kernel}")
    c = tg.token_len // (kernel * kernel)
    patches = tg.tokens.reshape(gh, gw, c, kernel, kernel).transpose(2, 3, 4, 0, 1)
    out = np.zeros((c, out_h + 2 * zero_pad, out_w + 2 * zero_pad))
    for di in range(kernel):
        for dj in range(kernel):
            out[
                :,
                di : di + (gh - 1) * stride + 1 : stride,
                dj : dj + (gw - 1) * stride + 1 : stride,
            ] += patches[:, di, dj]
    return FeatureMap(out[:, zero_pad : zero_pad + out_h, zero_pad : zero_pad + out_w])


def avg_pool(f: MapLike, kernel: int) -> FeatureMap:
    data = as_array(f)
    c, h, w = data.shape
    if kernel < 1 or h % kernel or w % kernel:
        raise SizingError(f"{h}x{w} is not divisible by pooling kernel {kernel}")
    blocks = data.reshape(c, h // kernel, kernel, w // kernel, kernel)
    return FeatureMap(blocks.mean(axis=(2, 4)))


def sample_grid(data: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """
    Bilinear sampling of a C x H x W array at every (rows, cols) position.

    Positions are clamped to [0, H-1] x [0, W-1] first (border replication).
    Returns an array of shape (C,) + rows.shape.
    """
    _, h, w = data.shape
    r = np.clip(np.asarray(rows, dtype=np.float64), 0, h - 1)
    c = np.clip(np.asarray(cols, dtype=np.float64), 0, w - 1)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    top = data[:, r0, c0] * (1 - fc) + data[:, r0, c1] * fc
    bottom = data[:, r1, c0] * (1 - fc) + data[:, r1, c1] * fc
    return top * (1 - fr) + bottom * fr


def bilinear_sample(f: MapLike, at: Coord) -> np.ndarray:
    if not (np.isfinite(at.row) and np.isfinite(at.col)):
        raise ValueError(f"non-finite coordinate {at}")
    return sample_grid(as_array(f), np.asarray(at.row), np.asarray(at.col))


def _cubic(x: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def resize_matrix(in_len: int, out_len: int, scale: float) -> np.ndarray:
    """
    Dense out_len x in_len matrix of bicubic weights with pixel-center
    alignment.  On downscaling the kernel is stretched by 1/scale so it also
    acts as the prefilter.  Rows are normalized to sum to 1 and indices
    outside the input are clamped onto the border pixel.
    """
    kscale = min(scale, 1.0)
    support = 2.0 / kscale
    u = (np.arange(out_len) + 0.5) / scale - 0.5
    taps = int(np.ceil(2 * support)) + 1
    left = np.floor(u - support).astype(np.intp)
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = kscale * _cubic(kscale * (u[:, None] - idx))
    weights /= weights.sum(axis=1, keepdims=True)
    mat = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(mat, (rows, np.clip(idx, 0, in_len - 1).ravel()), weights.ravel())
    return mat


def bicubic_resize(
    f: MapLike, factor: float = 4, direction: Literal["up", "down"] = "up"
) -> FeatureMap:
    data = as_array(f)
    if factor <= 0:
        raise SizingError(f"resize factor must be positive, got {factor}")
    if direction == "up":
        scale = float(factor)
    elif direction == "down":
        scale = 1.0 / float(factor)
    else:
        raise ValueError(f"Unknown resize direction: {direction!r}")
    _, h, w = data.shape
    out_h = int(round(h * scale))
    out_w = int(round(w * scale))
    if out_h < 1 or out_w < 1:
        raise SizingError(f"resizing {h}x{w} by {scale} gives {out_h}x{out_w}")
    mr = resize_matrix(h, out_h, scale)
    mc = resize_matrix(w, out_w, scale)
    return FeatureMap(np.einsum("oh,chw,pw->cop", mr, data, mc))


def pixel_shuffle(f: MapLike, r: int) -> FeatureMap:
    data = as_array(f)
    c, h, w = data.shape
    if r < 1 or c % (r * r):
        raise SizingError(f"{c} channels not divisible by r^2 = {r * r}")
    out = data.reshape(c // (r * r), r, r, h, w).transpose(0, 3, 1, 4, 2)
    return FeatureMap(out.reshape(c // (r * r), h * r, w * r))


def pixel_unshuffle(f: MapLike, r: int) -> FeatureMap:
    data = as_array(f)
    c, h, w = data.shape
    if r < 1 or h % r or w % r:
        raise SizingError(f"{h}x{w} not divisible by {r}")
    out = data.reshape(c, h // r, r, w // r, r).transpose(0, 2, 4, 1, 3)
    return FeatureMap(out.reshape(c * r * r, h // r, w // r))


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Stride-1 convolution with replicate padding, weight Cout x Cin x k x k.
    """
    cout, cin, kh, kw = weight.shape
    if x.shape[0] != cin:
        raise SizingError(f"conv expects {cin} input channels, got {x.shape[0]}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise SizingError(f"conv kernel must be odd, got {kh}x{kw}")
    if bias.shape != (cout,):
        raise SizingError(f"conv bias shape {bias.shape} != ({cout},)")
    ph, pw = kh // 2, kw // 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw)), mode="edge")
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
    out = np.tensordot(weight, windows, axes=([1, 2, 3], [0, 3, 4]))
    return out + bias[:, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)
