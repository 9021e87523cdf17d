import tempfile
import unittest
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from ..cli import main
from ..config import PipelineConfig
from ..frames import quantize, read_sequence
from ..motion import read_flo
from ..tensor_ops import bicubic_resize
from ..weights import save_weights, WeightSet

SMALL = ["--channels", "8", "--extract-blocks", "1", "--recon-blocks", "2", "--no-cache"]


class CliTest(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.d = Path(self.tmp.name)
        self.runner = CliRunner()

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def invoke(self, *args: str, env=None):
        return self.runner.invoke(main, list(args), env=env, catch_exceptions=False)

    def synth(self, kind: str, frames: int, name: str, size: str = "16x16") -> Path:
        out = self.d / name
        result = self.invoke("synth", kind, str(frames), str(out), "--size", size, "--seed", "5")
        self.assertEqual(0, result.exit_code, result.output)
        return out

    def test_synth_static(self) -> None:
        out = self.synth("static", 3, "static")
        frames = read_sequence(out)
        self.assertEqual(3, len(frames))
        for f in frames[1:]:
            np.testing.assert_array_equal(frames[0].data, f.data)

    def test_synth_unwritable(self) -> None:
        blocker = self.d / "file"
        blocker.write_text("x")
        result = self.invoke("synth", "pan", "2", str(blocker / "sub"))
        self.assertEqual(2, result.exit_code)

    def test_sr_zero_weights_is_bicubic(self) -> None:
        lr = self.synth("pan", 3, "lr")
        weights = self.d / "zero.ttwb"
        save_weights(WeightSet.zeros(PipelineConfig.small()), weights)
        out = self.d / "sr"
        result = self.invoke("sr", str(lr), str(out), "--weights", str(weights), *SMALL)
        self.assertEqual(0, result.exit_code, result.output)
        for frame, sr in zip(read_sequence(lr), read_sequence(out)):
            self.assertEqual((3, 64, 64), sr.shape)
            np.testing.assert_array_equal(quantize(bicubic_resize(frame, 4)), quantize(sr))

    def test_sr_digest_stable_across_threads(self) -> None:
        lr = self.synth("pan", 3, "lr")
        digests = []
        for threads in ("1", "3"):
            result = self.invoke(
                "sr", str(lr), str(self.d / f"sr{threads}"), "--golden-hash", *SMALL,
                env={"TTVSR_THREADS": threads},
            )
            self.assertEqual(0, result.exit_code, result.output)
            digests.append(result.output.splitlines()[-1])
        self.assertEqual(64, len(digests[0]))
        self.assertEqual(digests[0], digests[1])

    def test_sr_bad_weights(self) -> None:
        lr = self.synth("static", 1, "lr")
        weights = self.d / "bad.ttwb"
        weights.write_bytes(b"TTWB\x01\x00\x00\x00\x05\x00\x00\x00phi.h")
        result = self.invoke("sr", str(lr), str(self.d / "sr"), "--weights", str(weights), *SMALL)
        self.assertEqual(3, result.exit_code)
        self.assertIn("truncated at tensor 0", result.output)

        save_weights(WeightSet.zeros(PipelineConfig.small(channels=4)), weights)
        result = self.invoke("sr", str(lr), str(self.d / "sr"), "--weights", str(weights), *SMALL)
        self.assertEqual(3, result.exit_code)
        self.assertIn("phi.head.weight", result.output)

    def test_sr_with_gt_and_flows(self) -> None:
        lr = self.synth("pan", 3, "lr")
        flows = self.d / "flows"
        result = self.invoke("flow", str(lr), str(flows), "--bidirectional")
        self.assertEqual(0, result.exit_code, result.output)
        first = read_flo(flows / "flow_00001.flo")
        self.assertEqual((16, 16), (first.height, first.width))
        self.assertTrue((flows / "rflow_00002.flo").exists())

        gt = self.synth("pan", 3, "gt", size="64x64")
        out = self.d / "sr"
        result = self.invoke(
            "sr", str(lr), str(out), "--gt", str(gt), "--flows", str(flows), "--bidirectional", *SMALL
        )
        self.assertEqual(0, result.exit_code, result.output)
        lines = (out / "metrics.csv").read_text().splitlines()
        self.assertEqual("frame_index,psnr_db,ssim", lines[0])
        self.assertEqual(4, len(lines))

    def test_sr_gt_count_mismatch(self) -> None:
        lr = self.synth("pan", 2, "lr")
        gt = self.synth("pan", 1, "gt", size="64x64")
        result = self.invoke("sr", str(lr), str(self.d / "sr"), "--gt", str(gt), *SMALL)
        self.assertEqual(2, result.exit_code)

    def test_traj_static(self) -> None:
        lr = self.synth("static", 4, "lr")
        out = self.d / "traj.txt"
        result = self.invoke("traj", str(lr), "--cell", "3,4", "--out", str(out))
        self.assertEqual(0, result.exit_code, result.output)
        self.assertEqual("max gap: 0.000000\n", result.output)
        text = out.read_text()
        self.assertIn("# location map\n1 3.000000 4.000000\n", text)
        self.assertIn("# oracle\n", text)

    def test_traj_pan(self) -> None:
        lr = self.synth("pan", 4, "lr")
        result = self.invoke("traj", str(lr), "--cell", "8,8")
        self.assertEqual(0, result.exit_code, result.output)
        self.assertLessEqual(float(result.output.split()[-1]), 1e-3)
        result = self.invoke("traj", str(lr), "--cell", "4,4", "--pool", "2")
        self.assertEqual(0, result.exit_code, result.output)

    def test_traj_out_of_range(self) -> None:
        lr = self.synth("static", 2, "lr")
        result = self.invoke("traj", str(lr), "--cell", "16,0")
        self.assertEqual(2, result.exit_code)
        result = self.invoke("traj", str(lr), "--cell", "nope")
        self.assertEqual(2, result.exit_code)

    def test_bench_out_and_trace(self) -> None:
        out = self.d / "bench.csv"
        trace = self.d / "trace.json"
        result = self.invoke("--trace", str(trace), "bench", "--out", str(out))
        self.assertEqual(0, result.exit_code, result.output)
        self.assertEqual("", result.output)
        self.assertIn("10240,640,0.0625", out.read_text())
        self.assertTrue(trace.exists())
