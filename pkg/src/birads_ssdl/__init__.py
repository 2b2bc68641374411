"""Boundary-oriented feature maps and a semi-supervised convolutional
auto-encoder classifier for lesion images, built on a small numpy autograd
engine."""

from .evaluation import MetricsReport, evaluate, metrics_from_confusion
from .imaging import make_bfm
from .network import ArchitectureConfig, build_model, load_checkpoint, save_checkpoint
from .training import TrainConfig, fine_tune, fit

__version__ = "0.1.0"

__all__ = [
    "ArchitectureConfig", "MetricsReport", "TrainConfig", "build_model", "evaluate", "fine_tune",
    "fit", "load_checkpoint", "make_bfm", "metrics_from_confusion", "save_checkpoint",
]
