"""Density regression network, loss, optimiser and training loop."""

from .arch import DESK_STAGES, FULL_STAGES, TAILS, ArchSpec, init_params, param_count, param_shapes
from .checkpoint import load_checkpoint, read_history_csv, save_checkpoint, write_history_csv
from .loss import batch_loss, default_weights, loss
from .network import RegressorParams, backward_batch, forward, forward_batch, predict, prepare
from .optim import AdamState, ScheduleConfig, adam_step, lr_schedule_update
from .train import History, TrainConfig, arrays, evaluate_loss, train, train_step

__all__ = [
    "ArchSpec", "AdamState", "DESK_STAGES", "History", "FULL_STAGES", "RegressorParams",
    "ScheduleConfig", "TAILS", "TrainConfig", "adam_step", "arrays", "backward_batch",
    "batch_loss", "default_weights", "evaluate_loss", "forward", "forward_batch", "init_params",
    "load_checkpoint", "loss", "lr_schedule_update", "param_count", "param_shapes", "predict",
    "prepare", "read_history_csv", "save_checkpoint", "train", "train_step", "write_history_csv",
]
