"""
Trajectory-aware hard attention.

A query only looks at the keys that lie on its own trajectory: the most
similar one (cosine similarity) is selected, and its value is scaled by that
similarity and concatenated onto the query.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from vmodule import VLOG_2

from .tensor_ops import kernel_pair, KernelLike, MapLike, sample_grid
from .tokenization import tokens_from_map_at
from .trajectory import LocationMap, LocationMapStack
from .types import (
    BoundsError,
    CounterDisabledError,
    PreconditionError,
    SizingError,
    TokenGrid,
)

LOG = logging.getLogger(__name__)

TokenLike = Union[np.ndarray, Sequence[float]]

# Similarities within this of the row maximum count as ties.
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AttentionSelection:
    hard_index: int
    soft_conf: float


class MacCounter:
    """
    Counts the multiply-accumulates spent in similarity dot products.
    Normalization is not counted.
    """

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self.macs = 0

    def add(self, n: int) -> None:
        if self.enabled:
            self.macs += int(n)

    def reset(self) -> None:
        self.macs = 0

    def require(self) -> None:
        if not self.enabled:
            raise CounterDisabledError("similarity MAC counter is disabled")


def _normalized(x: np.ndarray) -> np.ndarray:
    norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    # Zero-norm tokens stay zero, which makes their similarity 0.
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def _similarities(q: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """q is N x L, keys N x T x L; returns N x T in [-1, 1]."""
    sims = (_normalized(q)[:, None, :] * _normalized(keys)).sum(axis=-1)
    return np.clip(sims, -1.0, 1.0)


def cosine_similarity(q: TokenLike, k: TokenLike, counter: Optional[MacCounter] = None) -> float:
    qa = np.asarray(q, dtype=np.float64).ravel()
    ka = np.asarray(k, dtype=np.float64).ravel()
    if qa.shape != ka.shape:
        raise SizingError(f"token lengths differ: {qa.size} vs {ka.size}")
    if counter is not None:
        counter.add(qa.size)
    return float(_similarities(qa[None, :], ka[None, None, :])[0, 0])


def select_many(
    queries: np.ndarray, keys: np.ndarray, counter: Optional[MacCounter] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Hard selection for N queries at once.  `queries` is N x L and `keys` is
    N x T x L (time-ordered).  Returns (hard_index, soft_conf), both length
    N; equal similarities resolve to the earliest time.
    """
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 3 or k.shape[0] != q.shape[0] or k.shape[2] != q.shape[1]:
        raise SizingError(f"queries {q.shape} and keys {k.shape} do not line up")
    if k.shape[1] == 0:
        raise PreconditionError("select needs at least one key")
    if counter is not None:
        counter.add(k.size)
    sims = _similarities(q, k)
    hard = np.argmax(sims >= sims.max(axis=1, keepdims=True) - TIE_TOLERANCE, axis=1)
    soft = np.take_along_axis(sims, hard[:, None], axis=1)[:, 0]
    return hard, soft


def select(
    q: TokenLike, keys: Sequence[TokenLike], counter: Optional[MacCounter] = None
) -> AttentionSelection:
    if len(keys) == 0:
        raise PreconditionError("select needs at least one key")
    qa = np.asarray(q, dtype=np.float64).ravel()
    ka = np.stack([np.asarray(k, dtype=np.float64).ravel() for k in keys])
    hard, soft = select_many(qa[None, :], ka[None, :, :], counter)
    return AttentionSelection(int(hard[0]), float(soft[0]))


def attend(
    q: TokenLike, sel: AttentionSelection, values: Sequence[TokenLike]
) -> np.ndarray:
    if not (0 <= sel.hard_index < len(values)):
        raise BoundsError(f"hard index {sel.hard_index} outside {len(values)} values")
    qa = np.asarray(q, dtype=np.float64).ravel()
    v = np.asarray(values[sel.hard_index], dtype=np.float64).ravel()
    return np.concatenate([qa, sel.soft_conf * v])


def attend_many(
    queries: np.ndarray, hard: np.ndarray, soft: np.ndarray, values: np.ndarray
) -> np.ndarray:
    """Vectorized `attend`: N x L queries, N x T x Lv values -> N x (L + Lv)."""
    picked = np.take_along_axis(values, hard[:, None, None], axis=1)[:, 0]
    return np.concatenate([queries, soft[:, None] * picked], axis=1)


def token_centers(lmap: LocationMap, cells: np.ndarray, kernel: KernelLike) -> np.ndarray:
    """
    Where the tokens at grid `cells` (N x 2) were at the map's time: the
    location map read at each token's center pixel.  Returns N x 2.
    """
    kh, kw = kernel_pair(kernel)
    rows = cells[:, 0] * kh + (kh - 1) / 2
    cols = cells[:, 1] * kw + (kw - 1) / 2
    return sample_grid(lmap.as_array(), rows, cols).T


def gather_tokens(
    maps: Sequence[LocationMap],
    frames: Sequence[MapLike],
    kernel: KernelLike,
    cells: np.ndarray,
) -> np.ndarray:
    """
    Tokens of `frames[i]` along the trajectories of `cells`, using `maps[i]`
    for the coordinates.  Returns N x len(maps) x L.
    """
    if len(maps) != len(frames):
        raise SizingError(f"{len(maps)} location maps for {len(frames)} frames")
    cells = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
    if not maps:
        raise PreconditionError("gather_tokens needs at least one location map")
    out = [
        tokens_from_map_at(frame, token_centers(lmap, cells, kernel), kernel)
        for lmap, frame in zip(maps, frames)
    ]
    LOG.log(VLOG_2, "gathered %d token(s) from %d frame(s)", cells.shape[0], len(maps))
    return np.stack(out, axis=1)


def gather_keys_values(
    maps: LocationMapStack,
    key_frames: Sequence[MapLike],
    value_frames: Sequence[MapLike],
    token_kernel: int,
    cell: Tuple[int, int],
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Keys and values for one token cell from every past frame held by `maps`
    (the current frame is excluded), oldest first.
    """
    past = maps.maps[:-1]
    if len(key_frames) != len(past) or len(value_frames) != len(past):
        raise SizingError(
            f"{len(past)} past location maps but {len(key_frames)} key and "
            f"{len(value_frames)} value frames"
        )
    gh = maps.height // token_kernel
    gw = maps.width // token_kernel
    m, n = cell
    if not (0 <= m < gh and 0 <= n < gw):
        raise BoundsError(f"token cell ({m}, {n}) outside {gh}x{gw}")
    if not past:
        return [], []
    cells = np.array([[m, n]])
    keys = gather_tokens(past, key_frames, token_kernel, cells)[0]
    values = gather_tokens(past, value_frames, token_kernel, cells)[0]
    return list(keys), list(values)


def exhaustive_select(
    q: TokenLike, key_grids: Sequence[TokenGrid], counter: Optional[MacCounter] = None
) -> Tuple[int, Tuple[int, int], float]:
    """
    Vanilla attention scan: compares `q` with every token of every grid.
    Returns (time index, (i, j), similarity) of the best match, earliest
    time then row-major position on ties.
    """
    if not key_grids:
        raise PreconditionError("exhaustive_select needs at least one key grid")
    gh, gw = key_grids[0].grid_h, key_grids[0].grid_w
    flat = np.concatenate([g.tokens.reshape(gh * gw, -1) for g in key_grids])
    hard, soft = select_many(
        np.asarray(q, dtype=np.float64).reshape(1, -1), flat[None], counter
    )
    t, pos = divmod(int(hard[0]), gh * gw)
    return t, divmod(pos, gw), float(soft[0])
