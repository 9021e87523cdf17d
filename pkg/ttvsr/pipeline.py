"""
The video super-resolution loop.

Frames are processed in time order.  Each step estimates the backward flow
to the previous frame, pulls the location maps forward, and answers every
query token of the current frame by hard attention along its trajectory
over two memory pools:

  fine    1x1 tokens, the `fine_window` most recent past frames
  coarse  cross-scale 4x4 tokens, past frames sampled every
          `coarse_interval` frames

Keys are the phi features of past frames.  Values start as the varphi
features of the first frame and are afterwards the attended features of each
frame.  The attended feature is reconstructed into a residual that is added
to the bicubic upsample of the frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from keke import kev, ktrace
from vmodule import VLOG_1, VLOG_2

from .attention import attend_many, gather_tokens, select_many
from .config import PipelineConfig
from .motion import block_match_flow, Flow
from .tensor_ops import (
    as_array,
    bicubic_resize,
    conv2d,
    fold,
    MapLike,
    pixel_shuffle,
    relu,
    unfold,
)
from .tokenization import cross_scale_map, cross_scale_tokenize
from .trajectory import LocationMapStack, new_stack, update_stack
from .types import FeatureMap, PreconditionError, SizingError, TokenGrid
from .weights import WeightSet

LOG = logging.getLogger(__name__)

__all__ = [
    "PipelineConfig",
    "PoolSelection",
    "StepResult",
    "embed_features",
    "propagate",
    "reconstruct",
    "run_sequence",
]


def _conv(x: np.ndarray, ws: WeightSet, name: str) -> np.ndarray:
    return conv2d(
        x,
        ws[f"{name}.weight"].astype(np.float64),
        ws[f"{name}.bias"].astype(np.float64),
    )


def _block_count(ws: WeightSet, prefix: str) -> int:
    n = 0
    while f"{prefix}.blocks.{n}.conv1.weight" in ws.tensors:
        n += 1
    return n


def _residual_blocks(x: np.ndarray, ws: WeightSet, prefix: str) -> np.ndarray:
    for i in range(_block_count(ws, prefix)):
        h = relu(_conv(x, ws, f"{prefix}.blocks.{i}.conv1"))
        x = x + _conv(h, ws, f"{prefix}.blocks.{i}.conv2")
    return x


def embed_features(
    frame: MapLike, ws: WeightSet, which: Literal["phi", "varphi"] = "phi"
) -> FeatureMap:
    if which not in ("phi", "varphi"):
        raise ValueError(f"Unknown embedding {which!r}")
    data = as_array(frame)
    if data.shape[0] != 3:
        raise SizingError(f"frames need 3 channels, got {data.shape[0]}")
    x = _conv(data, ws, f"{which}.head")
    return FeatureMap(_residual_blocks(x, ws, which))


def reconstruct(feature: MapLike, ws: WeightSet) -> FeatureMap:
    """Residual image at the upscaled size for an attended feature map."""
    x = _conv(as_array(feature), ws, "recon.fuse")
    x = _residual_blocks(x, ws, "recon")
    x = _conv(x, ws, "recon.tail")
    r = int(round(np.sqrt(x.shape[0] // 3)))
    if 3 * r * r != x.shape[0]:
        raise SizingError(f"recon.tail gives {x.shape[0]} channels, not 3 * r^2")
    return pixel_shuffle(x, r)


@dataclass(frozen=True)
class PoolSelection:
    """Per token cell: which past frame was selected and with what confidence."""

    times: Tuple[int, ...]
    hard_time: np.ndarray = field(repr=False)
    soft_conf: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class StepResult:
    time: int
    feature: np.ndarray = field(repr=False)
    selections: Dict[str, Optional[PoolSelection]]


@dataclass
class _MemoryEntry:
    key: np.ndarray
    value: np.ndarray
    key_cs: np.ndarray
    value_cs: np.ndarray


def _pool_attend(
    queries: TokenGrid,
    stack: LocationMapStack,
    times: Sequence[int],
    keys: Sequence[np.ndarray],
    values: Sequence[np.ndarray],
) -> Tuple[np.ndarray, Optional[PoolSelection]]:
    gh, gw, length = queries.tokens.shape
    kh, kw = queries.kernel
    q = queries.tokens.reshape(gh * gw, length)
    if not times:
        out = np.concatenate([q, np.zeros_like(q)], axis=1)
        sel = None
    else:
        cells = np.indices((gh, gw)).reshape(2, -1).T
        maps = [stack.map_at(t) for t in times]
        k = gather_tokens(maps, keys, (kh, kw), cells)
        v = gather_tokens(maps, values, (kh, kw), cells)
        hard, soft = select_many(q, k)
        out = attend_many(q, hard, soft, v)
        sel = PoolSelection(
            tuple(times),
            np.asarray(times)[hard].reshape(gh, gw),
            soft.reshape(gh, gw),
        )
    grid = TokenGrid(out.reshape(gh, gw, 2 * length), 2 * queries.channels, (kh, kw), kh)
    h, w = stack.height, stack.width
    return fold(grid, h, w, kh, kh).data, sel


@ktrace("direction", shortname=True)
def propagate(
    frames: Sequence[FeatureMap],
    ws: WeightSet,
    cfg: PipelineConfig,
    flows: Optional[Sequence[Optional[Flow]]] = None,
    direction: str = "forward",
) -> List[StepResult]:
    """
    One temporal pass over `frames`.  `flows[i]`, when given, is the backward
    flow from frames[i + 1] into frames[i]; missing entries are block-matched.
    """
    if flows is not None and len(flows) != len(frames) - 1:
        raise SizingError(f"{len(flows)} flows for {len(frames)} frames")
    kf, kc = cfg.token_kernel_fine, cfg.token_kernel_coarse
    memory: Dict[int, _MemoryEntry] = {}
    results: List[StepResult] = []
    stack: Optional[LocationMapStack] = None

    for idx, frame in enumerate(frames):
        t = idx + 1
        with kev("step", direction=direction, t=t):
            phi = embed_features(frame, ws, "phi").data
            if stack is None:
                stack = new_stack(frame.height, frame.width, cfg.map_ring_limit)
            else:
                flow = flows[idx - 1] if flows is not None else None
                if flow is None:
                    flow = block_match_flow(
                        frame,
                        frames[idx - 1],
                        patch=cfg.flow_patch,
                        radius=cfg.flow_radius,
                        parallelism=cfg.parallelism,
                    )
                stack = update_stack(stack, flow)

            for old in [tt for tt in memory if tt < stack.first_time]:
                LOG.log(VLOG_2, "%s t=%d evicts memory of t=%d", direction, t, old)
                del memory[old]

            if t == 1:
                # Nothing to look back at yet: the first frame answers
                # against its own value embedding.
                seed = embed_features(frame, ws, "varphi").data
                memory[1] = _MemoryEntry(
                    phi, seed, cross_scale_map(phi, cfg.cs_kernels, kc).data,
                    cross_scale_map(seed, cfg.cs_kernels, kc).data,
                )
                fine_times: List[int] = [1]
                coarse_times: List[int] = [1]
            else:
                past = list(range(stack.first_time, t))
                fine_times = past[len(past) - cfg.fine_window :] if cfg.fine_window else []
                coarse_times = [tt for tt in past if (tt - 1) % cfg.coarse_interval == 0]

            fine, fine_sel = _pool_attend(
                unfold(phi, kf, kf),
                stack,
                fine_times,
                [memory[tt].key for tt in fine_times],
                [memory[tt].value for tt in fine_times],
            )
            coarse, coarse_sel = _pool_attend(
                cross_scale_tokenize(phi, cfg.cs_kernels, kc),
                stack,
                coarse_times,
                [memory[tt].key_cs for tt in coarse_times],
                [memory[tt].value_cs for tt in coarse_times],
            )
            attended = _conv(np.concatenate([fine, coarse]), ws, "attn.mix")
            if t > 1:
                memory[t] = _MemoryEntry(
                    phi, attended, cross_scale_map(phi, cfg.cs_kernels, kc).data,
                    cross_scale_map(attended, cfg.cs_kernels, kc).data,
                )
            LOG.log(
                VLOG_1,
                "%s t=%d fine=%s coarse=%s",
                direction,
                t,
                fine_times,
                coarse_times,
            )
            results.append(
                StepResult(t, attended, {"fine": fine_sel, "coarse": coarse_sel})
            )
    return results


def _check_frames(frames: Sequence[FeatureMap], cfg: PipelineConfig) -> None:
    if not frames:
        raise PreconditionError("run_sequence needs at least one frame")
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise SizingError(f"frame {i} has shape {f.shape}, expected {shape}")
    if shape[0] != 3:
        raise SizingError(f"frames need 3 channels, got {shape[0]}")
    for k in (cfg.token_kernel_fine, cfg.token_kernel_coarse):
        if shape[1] % k or shape[2] % k:
            raise SizingError(f"token kernel {k} does not divide frame {shape[1]}x{shape[2]}")


def run_sequence(
    frames: Sequence[FeatureMap],
    ws: WeightSet,
    cfg: PipelineConfig,
    flows: Optional[Sequence[Optional[Flow]]] = None,
    backward_flows: Optional[Sequence[Optional[Flow]]] = None,
) -> List[FeatureMap]:
    """
    Super-resolves every frame.  `backward_flows[i]`, when given, maps
    frames[i] into frames[i + 1] and is used by the reverse pass.
    """
    _check_frames(frames, cfg)
    ws.validate(cfg)
    LOG.info(
        "Running %d frame(s) of %dx%d%s",
        len(frames),
        frames[0].height,
        frames[0].width,
        " bidirectionally" if cfg.bidirectional else "",
    )
    features = [s.feature for s in propagate(frames, ws, cfg, flows, "forward")]
    if cfg.bidirectional:
        if backward_flows is not None and len(backward_flows) != len(frames) - 1:
            raise SizingError(
                f"{len(backward_flows)} backward flows for {len(frames)} frames"
            )
        reverse_flows = list(reversed(backward_flows)) if backward_flows is not None else None
        reverse = propagate(list(reversed(frames)), ws, cfg, reverse_flows, "backward")
        features = [
            np.concatenate([fwd, bwd.feature])
            for fwd, bwd in zip(features, reversed(reverse))
        ]

    outputs = []
    for frame, feat in zip(frames, features):
        with kev("reconstruct"):
            residual = reconstruct(feat, ws).data
            outputs.append(FeatureMap(residual + bicubic_resize(frame, cfg.upscale).data))
    return outputs
