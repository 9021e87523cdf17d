from .attention import AttentionTest
from .bench import BenchTest
from .cache import WeightCacheTest
from .cli import CliTest
from .cli_scenarios import CliScenariosTest
from .frames import FramesTest
from .metrics import MetricsTest
from .motion import MotionTest
from .pipeline import PipelineTest
from .tensor_ops import TensorOpsTest
from .tokenization import TokenizationTest
from .trajectory import TrajectoryTest
from .weights import WeightsTest

__all__ = [
    "AttentionTest",
    "BenchTest",
    "CliScenariosTest",
    "CliTest",
    "FramesTest",
    "MetricsTest",
    "MotionTest",
    "PipelineTest",
    "TensorOpsTest",
    "TokenizationTest",
    "TrajectoryTest",
    "WeightCacheTest",
    "WeightsTest",
]
