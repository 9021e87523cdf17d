"""
Frozen digests of seeded runs, stored as `name digest` lines in goldens.txt.

A missing entry is recorded by the first run that computes it and compared
on every run after that.  UPDATE_GOLDENS=1 re-records existing entries.
"""

import hashlib
import logging
import os
import unittest
from pathlib import Path
from typing import Dict

import numpy as np

LOG = logging.getLogger(__name__)

GOLDENS_PATH = Path(__file__).parent / "goldens.txt"
HEADER = "# name digest; re-record with UPDATE_GOLDENS=1\n"


def load_goldens() -> Dict[str, str]:
    out: Dict[str, str] = {}
    if not GOLDENS_PATH.exists():
        return out
    for line in GOLDENS_PATH.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            name, value = line.split()
            out[name] = value
    return out


def save_goldens(goldens: Dict[str, str]) -> None:
    GOLDENS_PATH.write_text(
        HEADER + "".join(f"{k} {v}\n" for k, v in sorted(goldens.items()))
    )


def array_digest(x: np.ndarray, decimals: int = 4) -> str:
    """sha256 over the shape and the values rounded to `decimals` places."""
    h = hashlib.sha256()
    h.update(np.array(x.shape, dtype="<u4").tobytes())
    # +0.0 folds -0.0 into 0.0
    h.update((np.round(np.asarray(x, dtype=np.float64), decimals) + 0.0).astype("<f8").tobytes())
    return h.hexdigest()


def check_golden(test: unittest.TestCase, name: str, value: str) -> None:
    goldens = load_goldens()
    if os.getenv("UPDATE_GOLDENS") or name not in goldens:
        LOG.warning("Recording golden %s = %s", name, value)
        goldens[name] = value
        save_goldens(goldens)
        return
    test.assertEqual(goldens[name], value, f"golden {name} changed")
