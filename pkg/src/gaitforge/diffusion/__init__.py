from .schedule import NoiseSchedule, cosine_schedule, linear_schedule, make_schedule
from .nn import AdamOptimizer, TrajectoryDenoiser
from .model import (
    DiffusionModel,
    NonFiniteLoss,
    forward_noising,
    load_checkpoint,
    save_checkpoint,
    save_loss_log,
    train,
    train_step,
)
from .sampling import ddpm_step, sample
from .executor import DiffusionPlanPolicy, Plan, RecedingHorizonExecutor, ThreadedExecutor

__all__ = [
    "NoiseSchedule",
    "cosine_schedule",
    "linear_schedule",
    "make_schedule",
    "AdamOptimizer",
    "TrajectoryDenoiser",
    "DiffusionModel",
    "NonFiniteLoss",
    "forward_noising",
    "load_checkpoint",
    "save_checkpoint",
    "save_loss_log",
    "train",
    "train_step",
    "ddpm_step",
    "sample",
    "DiffusionPlanPolicy",
    "Plan",
    "RecedingHorizonExecutor",
    "ThreadedExecutor",
]
