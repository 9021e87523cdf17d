from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Optional, Tuple


@dataclass(frozen=True)
class PipelineConfig:
    upscale: int = 4
    channels: int = 64
    extract_blocks: int = 5
    recon_blocks: int = 60
    token_kernel_coarse: int = 4
    token_kernel_fine: int = 1
    # Most recent past frames answered with fine tokens.
    fine_window: int = 2
    # Past frame t joins the coarse pool when (t - 1) % coarse_interval == 0.
    coarse_interval: int = 3
    cs_kernels: Tuple[int, ...] = (4, 6, 8)
    bidirectional: bool = False
    seed: int = 42
    map_ring_limit: Optional[int] = None
    flow_patch: int = 3
    flow_radius: int = 2
    parallelism: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "cs_kernels", tuple(int(k) for k in self.cs_kernels))
        for name in (
            "upscale",
            "channels",
            "token_kernel_coarse",
            "token_kernel_fine",
            "coarse_interval",
            "flow_patch",
            "parallelism",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("extract_blocks", "recon_blocks", "fine_window", "flow_radius"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not self.cs_kernels:
            raise ValueError("cs_kernels must not be empty")
        if min(self.cs_kernels) < self.token_kernel_coarse:
            raise ValueError(
                f"cs_kernels {self.cs_kernels} must not be smaller than "
                f"token_kernel_coarse {self.token_kernel_coarse}"
            )
        if self.flow_patch % 2 == 0:
            raise ValueError(f"flow_patch must be odd, got {self.flow_patch}")
        if self.map_ring_limit is not None and self.map_ring_limit < 1:
            raise ValueError(f"map_ring_limit must be >= 1, got {self.map_ring_limit}")

    @classmethod
    def small(cls, **overrides: Any) -> PipelineConfig:
        """Narrow, shallow network for tests and quick runs."""
        fields = {"channels": 8, "extract_blocks": 1, "recon_blocks": 2}
        fields.update(overrides)
        return cls(**fields)

    def replace(self, **changes: Any) -> PipelineConfig:
        return dataclasses.replace(self, **changes)

    @property
    def recon_in_channels(self) -> int:
        return 2 * self.channels if self.bidirectional else self.channels

    def shape_key(self) -> str:
        """Identifies everything that determines the weight tensor shapes."""
        return (
            f"c={self.channels},e={self.extract_blocks},r={self.recon_blocks},"
            f"u={self.upscale},bi={int(self.bidirectional)}"
        )
