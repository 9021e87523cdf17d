"""
Similarity cost of vanilla vs trajectory attention, in closed form and
measured by counting multiply-accumulates in an instrumented pass.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Union

import numpy as np

from .attention import exhaustive_select, gather_tokens, MacCounter, select_many
from .motion import zero_flow
from .tensor_ops import unfold
from .trajectory import new_stack, update_stack
from .types import SizingError, TokenGrid

LOG = logging.getLogger(__name__)

CSV_HEADER = ["T", "C", "H", "W", "Dh", "Dw", "vanilla_macs", "traj_macs", "ratio"]


@dataclass(frozen=True)
class AttnShape:
    T: int
    C: int
    H: int
    W: int
    Dh: int
    Dw: int

    def __post_init__(self) -> None:
        for name in ("T", "C", "H", "W", "Dh", "Dw"):
            if getattr(self, name) < 1:
                raise SizingError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.H % self.Dh or self.W % self.Dw:
            raise SizingError(
                f"token {self.Dh}x{self.Dw} does not divide feature {self.H}x{self.W}"
            )


def cost_vanilla(s: AttnShape) -> int:
    return s.T * (s.H // s.Dh) * (s.W // s.Dw) * s.C * s.Dh * s.Dw


def cost_trajectory(s: AttnShape) -> int:
    return s.T * s.C * s.Dh * s.Dw


def measure_similarity_macs(
    s: AttnShape,
    mode: Literal["trajectory", "vanilla"] = "trajectory",
    seed: int = 0,
    counter: Optional[MacCounter] = None,
) -> int:
    """
    Runs one query through the attention code on random features and
    returns the counted similarity MACs.
    """
    counter = counter if counter is not None else MacCounter()
    counter.require()
    counter.reset()
    rng = np.random.default_rng(seed)
    frames = [rng.standard_normal((s.C, s.H, s.W)) for _ in range(s.T)]
    kernel = (s.Dh, s.Dw)
    query = frames[-1][:, : s.Dh, : s.Dw].reshape(-1)

    if mode == "vanilla":
        grids = [_unfold_rect(f, s) for f in frames]
        exhaustive_select(query, grids, counter)
    elif mode == "trajectory":
        stack = new_stack(s.H, s.W)
        for _ in range(s.T - 1):
            stack = update_stack(stack, zero_flow(s.H, s.W))
        keys = gather_tokens(stack.maps, frames, kernel, np.array([[0, 0]]))
        select_many(query[None, :], keys, counter)
    else:
        raise ValueError(f"Unknown attention mode {mode!r}")
    LOG.info("%s %s: %d MACs", mode, s, counter.macs)
    return counter.macs


def _unfold_rect(f: np.ndarray, s: AttnShape) -> TokenGrid:
    if s.Dh == s.Dw:
        return unfold(f, s.Dh, s.Dh)
    gh, gw = s.H // s.Dh, s.W // s.Dw
    blocks = f.reshape(s.C, gh, s.Dh, gw, s.Dw).transpose(1, 3, 0, 2, 4)
    return TokenGrid(blocks.reshape(gh, gw, -1), s.C, (s.Dh, s.Dw), s.Dh)


def report_row(s: AttnShape) -> List[Union[int, str]]:
    vanilla = cost_vanilla(s)
    traj = cost_trajectory(s)
    return [s.T, s.C, s.H, s.W, s.Dh, s.Dw, vanilla, traj, f"{traj / vanilla:.6g}"]


def report_csv(shapes: Iterable[AttnShape]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in shapes:
        writer.writerow(report_row(s))
    return buf.getvalue()
