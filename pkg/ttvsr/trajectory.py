"""
Location maps: one H x W coordinate matrix per past frame, all describing
trajectories that end on the integer grid of the newest frame.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from keke import ktrace
from vmodule import VLOG_1, VLOG_2

from .motion import Flow
from .tensor_ops import bilinear_sample, sample_grid
from .types import BoundsError, Coord, FeatureMap, SizingError

LOG = logging.getLogger(__name__)

# Whole-matrix sampling calls and cells sampled, for checking that updates
# never fall back to per-trajectory work.
STATS: Counter[str] = Counter()


@dataclass(frozen=True)
class LocationMap:
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    time_tag: int

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape != self.cols.shape:
            raise SizingError(
                f"location map components differ: {self.rows.shape} vs {self.cols.shape}"
            )

    @property
    def height(self) -> int:
        return int(self.rows.shape[0])

    @property
    def width(self) -> int:
        return int(self.rows.shape[1])

    def coords(self, m: int, n: int) -> Coord:
        return Coord(float(self.rows[m, n]), float(self.cols[m, n]))

    def as_array(self) -> np.ndarray:
        return np.stack([self.rows, self.cols])


@dataclass(frozen=True)
class Trajectory:
    points: Tuple[Coord, ...]
    end: Tuple[int, int]


@dataclass(frozen=True)
class LocationMapStack:
    """
    Time-ordered location maps; the last one is always the identity grid of
    frame `current_time`.  With a ring limit only the newest maps are kept.
    """

    maps: Tuple[LocationMap, ...]
    current_time: int
    ring_limit: Optional[int] = None

    @property
    def height(self) -> int:
        return self.maps[-1].height

    @property
    def width(self) -> int:
        return self.maps[-1].width

    @property
    def first_time(self) -> int:
        return self.maps[0].time_tag

    def map_at(self, t: int) -> LocationMap:
        idx = t - self.first_time
        if not (0 <= idx < len(self.maps)):
            raise BoundsError(
                f"time {t} not held (stack covers {self.first_time}..{self.current_time})"
            )
        return self.maps[idx]


def identity_map(h: int, w: int, t: int) -> LocationMap:
    if h < 1 or w < 1:
        raise SizingError(f"location map needs positive size, got {h}x{w}")
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    return LocationMap(rows, cols, t)


def new_stack(h: int, w: int, ring_limit: Optional[int] = None) -> LocationMapStack:
    if ring_limit is not None and ring_limit < 1:
        raise ValueError(f"ring_limit must be >= 1, got {ring_limit}")
    return LocationMapStack((identity_map(h, w, 1),), 1, ring_limit)


@ktrace("flow.height", "flow.width", shortname=True)
def update_stack(stack: LocationMapStack, flow: Flow) -> LocationMapStack:
    """
    Pulls every stored map forward one frame along the backward flow, then
    appends the identity map of the new frame.
    """
    h, w = stack.height, stack.width
    if (flow.height, flow.width) != (h, w):
        raise SizingError(
            f"flow {flow.height}x{flow.width} does not match location maps {h}x{w}"
        )
    grid_r, grid_c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # All maps go through one sampling call as 2*T channels.
    fields = np.concatenate([m.as_array() for m in stack.maps])
    sampled = sample_grid(fields, grid_r + flow.d_row, grid_c + flow.d_col)
    STATS["sample_calls"] += 1
    STATS["sampled_cells"] += fields.shape[0] * h * w

    updated: List[LocationMap] = []
    for i, old in enumerate(stack.maps):
        rows = np.clip(sampled[2 * i], 0, h - 1)
        cols = np.clip(sampled[2 * i + 1], 0, w - 1)
        updated.append(LocationMap(rows, cols, old.time_tag))

    t = stack.current_time + 1
    updated.append(identity_map(h, w, t))
    if stack.ring_limit is not None and len(updated) > stack.ring_limit:
        dropped = len(updated) - stack.ring_limit
        LOG.log(VLOG_2, "ring limit %d drops %d map(s)", stack.ring_limit, dropped)
        updated = updated[dropped:]
    LOG.log(VLOG_1, "update_stack -> t=%d holding %d map(s)", t, len(updated))
    return LocationMapStack(tuple(updated), t, stack.ring_limit)


def trajectory_of(stack: LocationMapStack, m: int, n: int) -> Trajectory:
    if not (0 <= m < stack.height and 0 <= n < stack.width):
        raise BoundsError(f"cell ({m}, {n}) outside {stack.height}x{stack.width}")
    return Trajectory(tuple(lmap.coords(m, n) for lmap in stack.maps), (m, n))


def oracle_track(flows: Sequence[Flow], m: int, n: int) -> Trajectory:
    """
    Chains one point backwards through `flows` (newest first), interpolating
    the flow at each step.  Shares no code with the location-map update.
    """
    points = [Coord(float(m), float(n))]
    for flow in flows:
        p = points[-1]
        d_row, d_col = bilinear_sample(FeatureMap(flow.as_array()), p)
        points.append(
            Coord(
                float(np.clip(p.row + d_row, 0, flow.height - 1)),
                float(np.clip(p.col + d_col, 0, flow.width - 1)),
            )
        )
    return Trajectory(tuple(reversed(points)), (m, n))


def max_gap(a: Trajectory, b: Trajectory) -> float:
    """Largest per-axis coordinate difference over the common (newest) times."""
    n = min(len(a.points), len(b.points))
    if n == 0:
        return 0.0
    pa = np.array(a.points[-n:])
    pb = np.array(b.points[-n:])
    return float(np.abs(pa - pb).max())


def format_trajectory(traj: Trajectory, first_time: int = 1) -> str:
    return "".join(
        f"{first_time + i} {p.row:.6f} {p.col:.6f}\n" for i, p in enumerate(traj.points)
    )


def parse_trajectory(lines: Iterable[str]) -> List[Tuple[int, Coord]]:
    out: List[Tuple[int, Coord]] = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        t, row, col = line.split()
        out.append((int(t), Coord(float(row), float(col))))
    return out
