"""
Quality metrics on [0, 1] images.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Literal, Sequence, Tuple, Union

import numpy as np
from scipy.signal import convolve2d

from .tensor_ops import as_array, MapLike
from .types import PreconditionError, SizingError

LOG = logging.getLogger(__name__)

CHARBONNIER_EPS = 1e-8

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# ITU-R BT.601 luma on [0, 1] RGB, offset included.
_LUMA = np.array([65.481, 128.553, 24.966]) / 255.0
_LUMA_OFFSET = 16.0 / 255.0

Mode = Literal["rgb", "luma"]


def _pair(a: MapLike, b: MapLike) -> Tuple[np.ndarray, np.ndarray]:
    x = as_array(a)
    y = as_array(b)
    if x.shape != y.shape:
        raise SizingError(f"shapes differ: {x.shape} vs {y.shape}")
    return x, y


def to_luma(x: np.ndarray) -> np.ndarray:
    if x.shape[0] != 3:
        raise SizingError(f"luma needs 3 channels, got {x.shape[0]}")
    return (np.tensordot(_LUMA, x, axes=1) + _LUMA_OFFSET)[None]


def _select(x: np.ndarray, y: np.ndarray, mode: Mode) -> Tuple[np.ndarray, np.ndarray]:
    if mode == "rgb":
        return x, y
    if mode == "luma":
        return to_luma(x), to_luma(y)
    raise ValueError(f"Unknown metric mode {mode!r}")


def charbonnier(a: Sequence[MapLike], b: Sequence[MapLike], eps: float = CHARBONNIER_EPS) -> float:
    if len(a) != len(b):
        raise SizingError(f"sequence lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise PreconditionError("charbonnier needs at least one frame")
    total = 0.0
    for fa, fb in zip(a, b):
        x, y = _pair(fa, fb)
        total += math.sqrt(float(((x - y) ** 2).sum()) + eps * eps)
    return total / len(a)


def psnr(a: MapLike, b: MapLike, mode: Mode = "rgb") -> float:
    """Peak signal-to-noise ratio in dB for peak 1.0; inf when identical."""
    x, y = _select(*_pair(a, b), mode)
    mse = float(((x - y) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax * ax) / (2 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_channel(x: np.ndarray, y: np.ndarray, win: np.ndarray) -> float:
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    def filt(z: np.ndarray) -> np.ndarray:
        return convolve2d(z, win, mode="valid")

    mu1 = filt(x)
    mu2 = filt(y)
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu12 = mu1 * mu2
    sigma1_sq = filt(x * x) - mu1_sq
    sigma2_sq = filt(y * y) - mu2_sq
    sigma12 = filt(x * y) - mu12
    num = (2 * mu12 + c1) * (2 * sigma12 + c2)
    den = (mu1_sq + mu2_sq + c1) * (sigma1_sq + sigma2_sq + c2)
    return float((num / den).mean())


def ssim(a: MapLike, b: MapLike, mode: Mode = "rgb") -> float:
    """
    Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic
    range 1, averaged over valid window positions and then over channels.
    """
    x, y = _select(*_pair(a, b), mode)
    if x.shape[1] < SSIM_WINDOW or x.shape[2] < SSIM_WINDOW:
        raise SizingError(
            f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[1]}x{x.shape[2]}"
        )
    win = gaussian_window()
    return float(np.mean([_ssim_channel(x[c], y[c], win) for c in range(x.shape[0])]))


def write_metrics_csv(
    rows: Iterable[Tuple[int, float, float]], path: Union[str, Path]
) -> None:
    """frame_index,psnr_db,ssim; identical frames are written as `inf`."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame_index", "psnr_db", "ssim"])
        for index, p, s in rows:
            writer.writerow([index, "inf" if math.isinf(p) else f"{p:.4f}", f"{s:.6f}"])
