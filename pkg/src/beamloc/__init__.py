"""Beam-tracing antenna placement and device-free WLAN localization toolkit."""

__version__ = "0.1.0"

from .channel import ChannelParams, ChannelMatrix, Trajectory
from .evaluation import EvalReport, ErrorStats, evaluate, error_statistics, placement_sweep
from .feedback import BFWMatrix, CompressedBFW, FeatureVector
from .forest import ForestModel, ForestParams
from .geometry import AreaGrid, CrossingTensor, MirrorImage, RoomLayout, load_layout
from .localizer import Estimate, LabeledDataset, LocalizerModel, build_dataset, localize, train_localizer
from .placement import MetricResult, PlacementPattern, ReflectionWeights, optimize

__all__ = [
    "__version__",
    "AreaGrid", "BFWMatrix", "ChannelMatrix", "ChannelParams", "CompressedBFW",
    "CrossingTensor", "Estimate", "EvalReport", "ErrorStats", "FeatureVector",
    "ForestModel", "ForestParams", "LabeledDataset", "LocalizerModel",
    "MetricResult", "MirrorImage", "PlacementPattern", "ReflectionWeights",
    "RoomLayout", "Trajectory", "build_dataset", "error_statistics", "evaluate",
    "load_layout", "localize", "optimize", "placement_sweep", "train_localizer",
]
