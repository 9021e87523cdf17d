import unittest
from fractions import Fraction

import numpy as np
from parameterized import parameterized

from ..attention import MacCounter
from ..bench import (
    AttnShape,
    cost_trajectory,
    cost_vanilla,
    measure_similarity_macs,
    report_csv,
)
from ..types import CounterDisabledError, SizingError


def random_shapes(count: int, seed: int = 12):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        dh, dw = (int(v) for v in rng.integers(1, 5, size=2))
        yield AttnShape(
            T=int(rng.integers(1, 5)),
            C=int(rng.integers(1, 4)),
            H=dh * int(rng.integers(1, 5)),
            W=dw * int(rng.integers(1, 5)),
            Dh=dh,
            Dw=dw,
        )


class BenchTest(unittest.TestCase):
    def test_closed_forms(self) -> None:
        s = AttnShape(10, 4, 16, 16, 4, 4)
        self.assertEqual(10240, cost_vanilla(s))
        self.assertEqual(640, cost_trajectory(s))
        self.assertEqual(Fraction(1, 16), Fraction(cost_trajectory(s), cost_vanilla(s)))
        self.assertEqual(2 * 10240, cost_vanilla(AttnShape(20, 4, 16, 16, 4, 4)))
        self.assertEqual(6, cost_vanilla(AttnShape(1, 1, 2, 3, 2, 3)))
        self.assertEqual(12, cost_trajectory(AttnShape(1, 3, 8, 8, 2, 2)))

    @parameterized.expand([("trajectory", 640), ("vanilla", 10240)])  # type:ignore[misc]
    def test_measured(self, mode: str, expected: int) -> None:
        s = AttnShape(10, 4, 16, 16, 4, 4)
        self.assertEqual(expected, measure_similarity_macs(s, mode))  # type: ignore[arg-type]

    def test_measured_matches_closed_form(self) -> None:
        for s in random_shapes(25):
            with self.subTest(shape=s):
                traj = measure_similarity_macs(s, "trajectory", seed=1)
                vanilla = measure_similarity_macs(s, "vanilla", seed=1)
                self.assertEqual(cost_trajectory(s), traj)
                self.assertEqual(cost_vanilla(s), vanilla)
                self.assertEqual(
                    Fraction(s.Dh * s.Dw, s.H * s.W), Fraction(traj, vanilla)
                )

    def test_counter_disabled(self) -> None:
        with self.assertRaises(CounterDisabledError):
            measure_similarity_macs(
                AttnShape(1, 1, 4, 4, 2, 2), counter=MacCounter(enabled=False)
            )

    def test_bad_shape(self) -> None:
        with self.assertRaises(SizingError):
            AttnShape(1, 1, 6, 6, 4, 4)
        with self.assertRaises(SizingError):
            AttnShape(0, 1, 4, 4, 2, 2)
        with self.assertRaises(ValueError):
            measure_similarity_macs(AttnShape(1, 1, 4, 4, 2, 2), "sparse")  # type: ignore[arg-type]

    def test_report(self) -> None:
        self.assertEqual(
            "T,C,H,W,Dh,Dw,vanilla_macs,traj_macs,ratio\n"
            "10,4,16,16,4,4,10240,640,0.0625\n"
            "2,1,6,6,2,2,72,8,0.111111\n",
            report_csv([AttnShape(10, 4, 16, 16, 4, 4), AttnShape(2, 1, 6, 6, 2, 2)]),
        )
