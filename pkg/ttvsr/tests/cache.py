import tempfile
import unittest
from pathlib import Path

from ..cache import NoCache, WeightCache
from ..config import PipelineConfig
from ..weights import weights_to_bytes, WeightSet


class WeightCacheTest(unittest.TestCase):
    def test_basic(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            pd = Path(d)
            c = WeightCache(pd)

            self.assertEqual(None, c.get("foo"))
            c.set("foo", b"value\n")
            self.assertEqual(b"value\n", c.get("foo"))
            self.assertEqual(
                pd / "2c" / "2c26b46b68ffc68ff99b453c1d30413413422d706483bfa0f98a5e886266e7ae.ttwb",
                c._local_path("foo"),
            )
            self.assertEqual({"hits": 1, "misses": 1, "stores": 1}, c.stats)

    def test_seeded(self) -> None:
        cfg = PipelineConfig.small()
        with tempfile.TemporaryDirectory() as d:
            c = WeightCache(Path(d))
            first = c.seeded(cfg, 7)
            second = c.seeded(cfg, 7)
            self.assertEqual({"hits": 1, "misses": 1, "stores": 1}, c.stats)
            self.assertEqual(weights_to_bytes(first), weights_to_bytes(second))
            self.assertEqual(
                weights_to_bytes(WeightSet.seeded(cfg, 7)), weights_to_bytes(second)
            )
            self.assertNotEqual(c.key(cfg, 7), c.key(cfg.replace(channels=4), 7))

    def test_bad_entry_replaced(self) -> None:
        cfg = PipelineConfig.small()
        with tempfile.TemporaryDirectory() as d:
            c = WeightCache(Path(d))
            c.set(c.key(cfg, 1), b"garbage")
            with self.assertLogs("ttvsr.cache", "WARNING"):
                ws = c.seeded(cfg, 1)
            self.assertEqual(weights_to_bytes(ws), c.get(c.key(cfg, 1)))

    def test_no_cache(self) -> None:
        c = NoCache(Path("/nonexistent"))
        c.set("foo", b"x")
        self.assertIsNone(c.get("foo"))
        c.seeded(PipelineConfig.small(), 1)

    def test_default_path(self) -> None:
        # appdirs gives some path we can build on
        WeightCache()._local_path("foo")
