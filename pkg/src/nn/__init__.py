from nn.checkpoint import load_checkpoint, save_checkpoint
from nn.losses import photometric_loss, supervised_loss
from nn.network import NetConfig, RegressionNet
from nn.optim import AdamState, adam_step
from nn.preprocess import destandardize, stack_pairs, standardize, to_grayscale
from nn.tensor import Tensor

__all__ = [
    "AdamState",
    "NetConfig",
    "RegressionNet",
    "Tensor",
    "adam_step",
    "destandardize",
    "load_checkpoint",
    "photometric_loss",
    "save_checkpoint",
    "stack_pairs",
    "standardize",
    "supervised_loss",
    "to_grayscale",
]
