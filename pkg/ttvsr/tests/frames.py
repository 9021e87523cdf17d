import tempfile
import unittest
from pathlib import Path

import numpy as np

from ..frames import (
    digest,
    PAN_VELOCITY,
    quantize,
    read_sequence,
    synth_sequence,
    write_sequence,
)
from ..motion import Flow, warp_backward
from ..types import FeatureMap, PreconditionError


class FramesTest(unittest.TestCase):
    def test_png_round_trip(self) -> None:
        seq = synth_sequence("noise", 2, (8, 12), seed=4)
        with tempfile.TemporaryDirectory() as d:
            paths = write_sequence(seq, d)
            self.assertEqual(["frame_00000.png", "frame_00001.png"], [p.name for p in paths])
            back = read_sequence(d)
        for orig, loaded in zip(seq, back):
            self.assertEqual((3, 8, 12), loaded.shape)
            np.testing.assert_array_equal(quantize(orig), quantize(loaded))
            self.assertLessEqual(np.abs(orig.data - loaded.data).max(), 0.5 / 255 + 1e-12)

    def test_read_empty_dir(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            with self.assertRaises(FileNotFoundError):
                read_sequence(d)

    def test_static(self) -> None:
        seq = synth_sequence("static", 3, (16, 16))
        for f in seq[1:]:
            np.testing.assert_array_equal(seq[0].data, f.data)
        self.assertGreaterEqual(seq[0].data.min(), 0.0)
        self.assertLessEqual(seq[0].data.max(), 1.0)

    def test_pan_is_warp_of_first_frame(self) -> None:
        seq = synth_sequence("pan", 5, (16, 16), seed=3)
        flow = Flow(np.full((16, 16), -4 * PAN_VELOCITY[0]), np.full((16, 16), -4 * PAN_VELOCITY[1]))
        warped = warp_backward(seq[0], flow)
        np.testing.assert_allclose(seq[4].data, warped.data, atol=1e-12)

    def test_zoom_center_fixed(self) -> None:
        seq = synth_sequence("zoom", 3, (9, 9), seed=3)
        np.testing.assert_allclose(seq[0].data[:, 4, 4], seq[2].data[:, 4, 4])
        self.assertFalse(np.allclose(seq[0].data, seq[2].data))

    def test_errors(self) -> None:
        with self.assertRaisesRegex(PreconditionError, "need ≥1 frame"):
            synth_sequence("pan", 0, (8, 8))
        with self.assertRaises(ValueError):
            synth_sequence("spin", 1, (8, 8))  # type: ignore[arg-type]

    def test_digest(self) -> None:
        a = synth_sequence("noise", 2, (8, 8), seed=1)
        b = synth_sequence("noise", 2, (8, 8), seed=1)
        self.assertEqual(digest(a), digest(b))
        self.assertEqual(64, len(digest(a)))
        self.assertNotEqual(digest(a), digest(a[:1]))
        self.assertNotEqual(digest(a), digest([FeatureMap(a[0].data * 0.5), a[1]]))
