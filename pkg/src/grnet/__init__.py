"""Gated recoding network for RGB-D salient object detection."""

__version__ = "0.1.0"

from .backbone import StagePlan
from .config import AblationFlags, ModelConfig, PRESETS, preset
from .data import SamplePair, SynthSpec, augment, derive_edge_map, generate_synthetic, load_dataset
from .estimator import GRNetSaliency
from .metrics import MetricReport, aggregate
from .model import GRNet
from .trainer import TrainConfig, evaluate, gate_stats, lr_at, train

__all__ = [
    "AblationFlags",
    "GRNet",
    "GRNetSaliency",
    "MetricReport",
    "ModelConfig",
    "PRESETS",
    "SamplePair",
    "StagePlan",
    "SynthSpec",
    "TrainConfig",
    "aggregate",
    "augment",
    "derive_edge_map",
    "evaluate",
    "gate_stats",
    "generate_synthetic",
    "load_dataset",
    "lr_at",
    "preset",
    "train",
]
