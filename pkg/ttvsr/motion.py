from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from keke import ktrace
from vmodule import VLOG_1

from .tensor_ops import as_array, avg_pool, MapLike, sample_grid
from .types import FeatureMap, FormatError, SizingError

LOG = logging.getLogger(__name__)

FLO_MAGIC = b"PIEH"


@dataclass(frozen=True)
class Flow:
    """
    Backward displacement field: output pixel p samples the previous frame at
    p + (d_row[p], d_col[p]).
    """

    d_row: np.ndarray = field(repr=False)
    d_col: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        d_row = np.array(self.d_row, dtype=np.float64)
        d_col = np.array(self.d_col, dtype=np.float64)
        if d_row.ndim != 2 or d_row.shape != d_col.shape or 0 in d_row.shape:
            raise SizingError(
                f"flow components must be equal H x W grids, got {d_row.shape} and {d_col.shape}"
            )
        if not (np.isfinite(d_row).all() and np.isfinite(d_col).all()):
            raise ValueError("flow contains non-finite values")
        bound = max(d_row.shape)
        if np.abs(d_row).max() > bound or np.abs(d_col).max() > bound:
            raise ValueError(f"flow displacement exceeds sanity bound {bound}")
        d_row.setflags(write=False)
        d_col.setflags(write=False)
        object.__setattr__(self, "d_row", d_row)
        object.__setattr__(self, "d_col", d_col)

    @property
    def height(self) -> int:
        return int(self.d_row.shape[0])

    @property
    def width(self) -> int:
        return int(self.d_row.shape[1])

    def as_array(self) -> np.ndarray:
        """2 x H x W, (d_row, d_col)"""
        return np.stack([self.d_row, self.d_col])


def zero_flow(height: int, width: int) -> Flow:
    return Flow(np.zeros((height, width)), np.zeros((height, width)))


def _candidates(radius: int, extent: int) -> List[Tuple[int, int]]:
    # Smallest magnitude first, then (d_row, d_col) lexicographic; the
    # reduction below keeps the first candidate reaching the minimum.
    # Displacements never exceed the frame extent, the Flow sanity bound.
    reach = min(radius, extent)
    span = range(-reach, reach + 1)
    return sorted(
        ((dr, dc) for dr in span for dc in span),
        key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
    )


@ktrace("patch", "radius", "parallelism", shortname=True)
def block_match_flow(
    cur: MapLike, prev: MapLike, patch: int = 3, radius: int = 2, parallelism: int = 1
) -> Flow:
    """
    Integer backward flow minimizing the patch SAD over a
    (2*radius+1)^2 search window, with border-clamped reads.
    """
    a = as_array(cur)
    b = as_array(prev)
    if a.shape != b.shape:
        raise SizingError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if patch < 1 or patch % 2 == 0:
        raise ValueError(f"patch must be odd and positive, got {patch}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")

    _, h, w = a.shape
    half = patch // 2
    rows = np.arange(h)
    cols = np.arange(w)

    def sad(d: Tuple[int, int]) -> np.ndarray:
        dr, dc = d
        total = np.zeros((h, w))
        for orow in range(-half, half + 1):
            cr = np.clip(rows + orow, 0, h - 1)[:, None]
            pr = np.clip(rows + orow + dr, 0, h - 1)[:, None]
            for ocol in range(-half, half + 1):
                cc = np.clip(cols + ocol, 0, w - 1)[None, :]
                pc = np.clip(cols + ocol + dc, 0, w - 1)[None, :]
                total += np.abs(a[:, cr, cc] - b[:, pr, pc]).sum(axis=0)
        return total

    candidates = _candidates(radius, max(h, w))
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        costs = list(pool.map(sad, candidates))

    best = np.full((h, w), np.inf)
    d_row = np.zeros((h, w))
    d_col = np.zeros((h, w))
    for (dr, dc), cost in zip(candidates, costs):
        better = cost < best
        best[better] = cost[better]
        d_row[better] = dr
        d_col[better] = dc

    LOG.log(
        VLOG_1,
        "block_match_flow %dx%d patch=%d radius=%d mean |d|=(%.3f, %.3f)",
        h,
        w,
        patch,
        radius,
        np.abs(d_row).mean(),
        np.abs(d_col).mean(),
    )
    return Flow(d_row, d_col)


def pool_flow(flow: Flow, factor: int) -> Flow:
    """
    Average-pools a flow to a grid `factor` times coarser; displacements are
    divided by `factor` because coordinates shrink with the grid.
    """
    if factor < 1 or flow.height % factor or flow.width % factor:
        raise SizingError(
            f"flow {flow.height}x{flow.width} is not divisible by pooling factor {factor}"
        )
    pooled = avg_pool(FeatureMap(flow.as_array()), factor).data / factor
    return Flow(pooled[0], pooled[1])


def warp_backward(f: MapLike, flow: Flow) -> FeatureMap:
    """Samples `f` at p + flow(p) for every pixel p."""
    data = as_array(f)
    if data.shape[1:] != (flow.height, flow.width):
        raise SizingError(
            f"map {data.shape[1:]} and flow {flow.height}x{flow.width} differ"
        )
    rr, cc = np.meshgrid(np.arange(flow.height), np.arange(flow.width), indexing="ij")
    return FeatureMap(sample_grid(data, rr + flow.d_row, cc + flow.d_col))


def flow_to_bytes(flow: Flow) -> bytes:
    header = FLO_MAGIC + np.array([flow.width, flow.height], dtype="<i4").tobytes()
    interleaved = np.stack([flow.d_col, flow.d_row], axis=-1).astype("<f4")
    return header + interleaved.tobytes()


def flow_from_bytes(data: bytes) -> Flow:
    if len(data) < 4 or data[:4] != FLO_MAGIC:
        raise FormatError("bad magic")
    if len(data) < 12:
        raise FormatError("truncated header")
    width, height = (int(v) for v in np.frombuffer(data, dtype="<i4", count=2, offset=4))
    if width <= 0:
        raise FormatError(f"bad width {width}")
    if height <= 0:
        raise FormatError(f"bad height {height}")
    expected = 12 + 8 * width * height
    if len(data) < expected:
        raise FormatError(
            f"truncated flow data: {len(data)} bytes, expected {expected}"
        )
    if len(data) > expected:
        raise FormatError(
            f"trailing bytes after flow data: {len(data)} bytes, expected {expected}"
        )
    values = np.frombuffer(data, dtype="<f4", count=2 * width * height, offset=12)
    values = values.reshape(height, width, 2).astype(np.float64)
    try:
        return Flow(values[..., 1], values[..., 0])
    except ValueError as e:
        raise FormatError(f"flow values: {e}") from e


def write_flo(flow: Flow, path: Union[str, Path]) -> None:
    Path(path).write_bytes(flow_to_bytes(flow))


def read_flo(path: Union[str, Path]) -> Flow:
    return flow_from_bytes(Path(path).read_bytes())
