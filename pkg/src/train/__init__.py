from train.loop import TrainConfig, TrainReport, train_loop
from train.steps import make_batches, network_input, supervised_step, unsupervised_step

__all__ = [
    "TrainConfig",
    "TrainReport",
    "make_batches",
    "network_input",
    "supervised_step",
    "train_loop",
    "unsupervised_step",
]
