"""
PNG frame sequences and synthetic test videos.
"""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .tensor_ops import sample_grid
from .types import FeatureMap, PreconditionError, SizingError

LOG = logging.getLogger(__name__)

FRAME_NAME = "frame_{:05d}.png"
FRAME_GLOB = "frame_*.png"

SynthKind = Literal["pan", "zoom", "static", "noise"]
SYNTH_KINDS = ("pan", "zoom", "static", "noise")

# Per-frame displacement of the pan texture, (rows, cols).
PAN_VELOCITY = (0.5, 0.75)
ZOOM_PER_FRAME = 1.05


def quantize(f: FeatureMap) -> np.ndarray:
    """H x W x 3 uint8."""
    return np.clip(np.round(f.data * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def read_frame(path: Union[str, Path]) -> FeatureMap:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return FeatureMap(arr.transpose(2, 0, 1))


def write_frame(f: FeatureMap, path: Union[str, Path]) -> None:
    if f.channels != 3:
        raise SizingError(f"PNG frames need 3 channels, got {f.channels}")
    Image.fromarray(quantize(f)).save(path)


def list_frames(directory: Union[str, Path]) -> List[Path]:
    return sorted(Path(directory).glob(FRAME_GLOB))


def read_sequence(directory: Union[str, Path]) -> List[FeatureMap]:
    paths = list_frames(directory)
    if not paths:
        raise FileNotFoundError(f"no {FRAME_GLOB} files in {directory}")
    LOG.info("Reading %d frame(s) from %s", len(paths), directory)
    return [read_frame(p) for p in paths]


def write_sequence(frames: Sequence[FeatureMap], directory: Union[str, Path]) -> List[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = out / FRAME_NAME.format(i)
        write_frame(f, p)
        paths.append(p)
    return paths


def digest(frames: Sequence[FeatureMap]) -> str:
    """sha256 over the 8-bit quantized frames, shapes included."""
    h = hashlib.sha256()
    for f in frames:
        h.update(np.array(f.shape, dtype="<u4").tobytes())
        h.update(quantize(f).tobytes())
    return h.hexdigest()


def texture(height: int, width: int, seed: int, sigma: float = 1.5) -> np.ndarray:
    """Smooth seeded RGB noise stretched to [0, 1]."""
    rng = np.random.default_rng(seed)
    t = gaussian_filter(rng.random((3, height, width)), sigma=(0, sigma, sigma), mode="wrap")
    lo, hi = t.min(), t.max()
    return (t - lo) / (hi - lo) if hi > lo else np.zeros_like(t)


def _resample(base: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> FeatureMap:
    return FeatureMap(np.clip(sample_grid(base, rows, cols), 0.0, 1.0))


def synth_sequence(
    kind: SynthKind,
    frames: int,
    size: Tuple[int, int],
    seed: int = 0,
) -> List[FeatureMap]:
    """
    pan: the texture moves by PAN_VELOCITY each frame; frame k samples the
    first frame at p - k * velocity (border replicated).
    zoom: frame k magnifies the texture about the center by ZOOM_PER_FRAME^k.
    static: the same texture every frame.  noise: independent textures.
    """
    if frames < 1:
        raise PreconditionError("need ≥1 frame")
    height, width = size
    if height < 1 or width < 1:
        raise SizingError(f"frame size must be positive, got {height}x{width}")
    base = texture(height, width, seed)
    rr, cc = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")

    out = []
    for k in range(frames):
        if kind == "pan":
            out.append(_resample(base, rr - k * PAN_VELOCITY[0], cc - k * PAN_VELOCITY[1]))
        elif kind == "zoom":
            z = ZOOM_PER_FRAME**k
            cr, cw = (height - 1) / 2, (width - 1) / 2
            out.append(_resample(base, cr + (rr - cr) / z, cw + (cc - cw) / z))
        elif kind == "static":
            out.append(FeatureMap(base))
        elif kind == "noise":
            out.append(FeatureMap(texture(height, width, seed + k)))
        else:
            raise ValueError(f"Unknown synthetic kind {kind!r}")
    return out
