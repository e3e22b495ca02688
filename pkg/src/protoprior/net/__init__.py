from .layers import LayerSpec
from .network import (
    FixedHead,
    LearnedHead,
    Network,
    build_network,
    nll_loss,
    softmax,
    softmax_nll,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import SGD, sgd_step
from .train import EpochMetrics, TrainResult, TrainSchedule, evaluate, train

__all__ = [
    "LayerSpec",
    "FixedHead",
    "LearnedHead",
    "Network",
    "build_network",
    "nll_loss",
    "softmax",
    "softmax_nll",
    "load_checkpoint",
    "save_checkpoint",
    "SGD",
    "sgd_step",
    "EpochMetrics",
    "TrainResult",
    "TrainSchedule",
    "evaluate",
    "train",
]
