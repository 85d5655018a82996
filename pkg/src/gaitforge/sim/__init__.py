from .walker import (
    WalkerParams,
    WalkerState,
    build_walker_model,
    make_params,
    step_walker,
    walker_energy,
)
from .navigator import NavigatorState, build_navigator_model, step_navigator
from .expert import GaitUnstable, NavigatorCruiseExpert, WalkerExpert, scripted_gait_rollout
from .episode import EpisodeRecord, PolicyContext, WalkerEnv, run_episode

__all__ = [
    "WalkerParams",
    "WalkerState",
    "build_walker_model",
    "make_params",
    "step_walker",
    "walker_energy",
    "NavigatorState",
    "build_navigator_model",
    "step_navigator",
    "GaitUnstable",
    "NavigatorCruiseExpert",
    "WalkerExpert",
    "scripted_gait_rollout",
    "EpisodeRecord",
    "PolicyContext",
    "WalkerEnv",
    "run_episode",
]
