"""
Named network tensors and the "TTWB" weight file.

File layout, all little-endian: magic b"TTWB", u32 tensor count, then per
tensor u32 name length, UTF-8 name, u32 ndim, ndim x u32 dims, float32 data.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Tuple, Union

import numpy as np
from vmodule import VLOG_1

from .config import PipelineConfig
from .types import WeightLoadError

LOG = logging.getLogger(__name__)

MAGIC = b"TTWB"


def _conv(shapes: Dict[str, Tuple[int, ...]], name: str, cout: int, cin: int, k: int) -> None:
    shapes[f"{name}.weight"] = (cout, cin, k, k)
    shapes[f"{name}.bias"] = (cout,)


def _blocks(shapes: Dict[str, Tuple[int, ...]], prefix: str, count: int, c: int) -> None:
    for i in range(count):
        _conv(shapes, f"{prefix}.blocks.{i}.conv1", c, c, 3)
        _conv(shapes, f"{prefix}.blocks.{i}.conv2", c, c, 3)


def expected_shapes(cfg: PipelineConfig) -> Dict[str, Tuple[int, ...]]:
    c = cfg.channels
    shapes: Dict[str, Tuple[int, ...]] = {}
    for net in ("phi", "varphi"):
        _conv(shapes, f"{net}.head", c, 3, 3)
        _blocks(shapes, net, cfg.extract_blocks, c)
    _conv(shapes, "attn.mix", c, 4 * c, 1)
    _conv(shapes, "recon.fuse", c, cfg.recon_in_channels, 1)
    _blocks(shapes, "recon", cfg.recon_blocks, c)
    _conv(shapes, "recon.tail", 3 * cfg.upscale * cfg.upscale, c, 3)
    return shapes


@dataclass(frozen=True)
class WeightSet:
    tensors: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        frozen = {}
        for name, value in self.tensors.items():
            arr = np.array(value, dtype=np.float32)
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "tensors", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightLoadError(f"missing tensor {name}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def validate(self, cfg: PipelineConfig) -> None:
        shapes = expected_shapes(cfg)
        for name, arr in self.tensors.items():
            if name not in shapes:
                raise WeightLoadError(f"unknown tensor {name}")
            if arr.shape != shapes[name]:
                raise WeightLoadError(
                    f"tensor {name} has shape {arr.shape}, expected {shapes[name]}"
                )
        for name in shapes:
            if name not in self.tensors:
                raise WeightLoadError(f"missing tensor {name}")

    def checksum(self, name: str) -> str:
        return hashlib.sha256(self[name].astype("<f4").tobytes()).hexdigest()

    @classmethod
    def zeros(cls, cfg: PipelineConfig) -> WeightSet:
        return cls({name: np.zeros(shape) for name, shape in expected_shapes(cfg).items()})

    @classmethod
    def seeded(cls, cfg: PipelineConfig, seed: Optional[int] = None) -> WeightSet:
        """
        He-normal convolution weights (std sqrt(2 / fan_in)), zero biases.
        The second conv of every residual block is scaled down by 10.
        """
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        tensors = {}
        for name, shape in expected_shapes(cfg).items():
            if name.endswith(".bias"):
                tensors[name] = np.zeros(shape)
                continue
            fan_in = int(np.prod(shape[1:]))
            w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
            if ".conv2." in name:
                w *= 0.1
            tensors[name] = w
        LOG.log(VLOG_1, "seeded %d tensors for %s", len(tensors), cfg.shape_key())
        return cls(tensors)


def weights_to_bytes(ws: WeightSet) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(ws))]
    for name in ws:
        arr = ws[name]
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    return b"".join(parts)


def weights_from_bytes(data: bytes, cfg: Optional[PipelineConfig] = None) -> WeightSet:
    if data[:4] != MAGIC:
        raise WeightLoadError("bad magic")
    if len(data) < 8:
        raise WeightLoadError("truncated header")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    tensors: Dict[str, np.ndarray] = {}
    for k in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + name_len > len(data):
                raise struct.error("name")
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", data, pos)
            dims = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * n > len(data):
                raise struct.error("data")
        except struct.error:
            raise WeightLoadError(f"truncated at tensor {k}") from None
        except UnicodeDecodeError:
            raise WeightLoadError(f"tensor {k} has a name that is not UTF-8") from None
        if name in tensors:
            raise WeightLoadError(f"duplicate tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
    if pos != len(data):
        raise WeightLoadError(f"{len(data) - pos} trailing bytes after {count} tensors")
    ws = WeightSet(tensors)
    if cfg is not None:
        ws.validate(cfg)
    return ws


def save_weights(ws: WeightSet, path: Union[str, Path]) -> None:
    Path(path).write_bytes(weights_to_bytes(ws))


def load_weights(path: Union[str, Path], cfg: Optional[PipelineConfig] = None) -> WeightSet:
    ws = weights_from_bytes(Path(path).read_bytes(), cfg)
    LOG.info("Loaded %d tensors from %s", len(ws), path)
    return ws
