"""Expert data collection for both environments: randomized walker
tracking episodes (adaptive start sampling, action delay on) and navigator
cruise episodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .dataset import (
    BODY_POS,
    EncodingSpec,
    WindowDataset,
    _build_windows,
    navigator_step_kinematics,
)
from .kinematics import ReferenceMotion
from .sampler import AdaptiveSampler
from .sim.episode import EpisodeRecord, WalkerEnv, run_episode
from .sim.expert import NavigatorCruiseExpert, WalkerExpert
from .sim.navigator import NavigatorState, step_navigator


def walker_reference_set(cfg: Config) -> list:
    """One reference per configured data speed (the gait scales its stride
    with the commanded speed, so slow/fast/backward gaits are all the same
    controller)."""
    import dataclasses

    from .sim.expert import scripted_gait_rollout

    out = []
    for v in cfg.gait.data_speeds:
        gait = dataclasses.replace(cfg.gait, speed_target=float(v))
        motion, _ = scripted_gait_rollout(gait, cfg.walker, cfg.impedance)
        out.append((float(v), motion))
    return out


def collect_walker_records(
    cfg: Config,
    refs,
    episodes: int,
    seed: int = 0,
    env: WalkerEnv | None = None,
) -> tuple[list[EpisodeRecord], AdaptiveSampler]:
    """Roll the gait expert with domain randomization and action delay on;
    start phases come from the adaptive sampler fed by episode outcomes.

    ``refs`` is a ReferenceMotion or a list of (speed_target, motion)
    pairs; episodes are spread round-robin over the set, the expert driving
    each reference at its own speed target."""
    import dataclasses

    env = env or WalkerEnv(cfg)
    if isinstance(refs, ReferenceMotion):
        refs = [(cfg.gait.speed_target, refs)]
    experts = [
        WalkerExpert(env.model, dataclasses.replace(cfg.gait, speed_target=v), env.kp, smoothing=cfg.gait.smoothing)
        for v, _ in refs
    ]
    sampler = AdaptiveSampler(bins=max(1, int(max(m.duration for _, m in refs))), cfg=cfg.sampler)
    records = []
    for e in range(episodes):
        j = e % len(refs)
        rng = np.random.default_rng(seed * 1_000_003 + e)
        rec = run_episode(
            env, experts[j], refs[j][1], sampler=sampler, rng=rng, compute_obs_rewards=False
        )
        records.append(rec)
    return records, sampler


@dataclass
class NavigatorRecord:
    states: list  # NavigatorState per step (E+1)
    actions: np.ndarray  # (E, 3)


def collect_navigator_records(cfg: Config, episodes: int, duration: float, seed: int = 0) -> list:
    records = []
    n_steps = int(duration / cfg.navigator.dt)
    for e in range(episodes):
        expert = NavigatorCruiseExpert(seed=seed * 9176 + e)
        state = NavigatorState.rest()
        states = [state.copy()]
        actions = np.zeros((n_steps, 3))
        for k in range(n_steps):
            a = expert.act(k, k * cfg.navigator.dt, state)
            actions[k] = a
            state = step_navigator(state, a, cfg.navigator)
            states.append(state.copy())
        records.append(NavigatorRecord(states=states, actions=actions))
    return records


def build_navigator_windows(
    cfg: Config, records: list, history: int, horizon: int, meta: dict | None = None
) -> WindowDataset:
    spec = EncodingSpec(BODY_POS, 1 + len(cfg.navigator.proxy_offsets), 0)
    episodes = [
        (
            [navigator_step_kinematics(s, cfg.navigator) for s in rec.states],
            rec.actions,
        )
        for rec in records
    ]
    return _build_windows(episodes, spec, history, horizon, meta)
