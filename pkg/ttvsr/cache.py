"""
On-disk store for generated weight sets, so repeated seeded runs skip the
random draw.  Entries are whole TTWB files keyed by seed and network shape.
"""

import logging
import os
from hashlib import sha256
from pathlib import Path
from tempfile import mkstemp
from typing import Optional

import appdirs

from .config import PipelineConfig
from .types import WeightLoadError
from .weights import WeightSet, weights_from_bytes, weights_to_bytes

LOG = logging.getLogger(__name__)


class WeightCache:
    def __init__(self, cache_path: Optional[Path] = None) -> None:
        if not cache_path:
            cache_path = Path(appdirs.user_cache_dir("ttvsr"))
        self.cache_path = cache_path
        self.stats = {"hits": 0, "misses": 0, "stores": 0}

    @staticmethod
    def key(cfg: PipelineConfig, seed: int) -> str:
        return f"seed={seed},{cfg.shape_key()}"

    def _local_path(self, key: str) -> Path:
        h = sha256(key.encode("utf-8")).hexdigest()
        return self.cache_path / h[:2] / f"{h}.ttwb"

    def get(self, key: str) -> Optional[bytes]:
        try:
            data = self._local_path(key).read_bytes()
        except OSError:
            self.stats["misses"] += 1
            return None
        self.stats["hits"] += 1
        return data

    def set(self, key: str, value: bytes) -> None:
        p = self._local_path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        # Readers only ever see complete files.
        (fd, temp_name) = mkstemp(f".{os.getpid()}", prefix=p.name, dir=p.parent)
        with os.fdopen(fd, "wb") as f:
            f.write(value)
        os.replace(temp_name, p)
        self.stats["stores"] += 1

    def seeded(self, cfg: PipelineConfig, seed: int) -> WeightSet:
        key = self.key(cfg, seed)
        data = self.get(key)
        if data is not None:
            try:
                return weights_from_bytes(data, cfg)
            except WeightLoadError as e:
                LOG.warning("Discarding bad cache entry for %s: %s", key, e)
        ws = WeightSet.seeded(cfg, seed)
        self.set(key, weights_to_bytes(ws))
        return ws


class NoCache(WeightCache):
    def get(self, key: str) -> Optional[bytes]:
        return None

    def set(self, key: str, value: bytes) -> None:
        pass
