"""Episode execution: adaptive start-phase reset, domain randomization,
action delay lines, velocity perturbations, per-step rewards, termination,
and outcome reporting back to the sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import Config
from ..kinematics import ReferenceMotion, forward_kinematics
from ..mdp import (
    ObsFlags,
    Termination,
    action_to_setpoint,
    anchored_targets,
    build_actor_obs,
    check_termination,
    impedance_gains,
    regularization_penalties,
    task_reward,
    total_reward,
)
from .walker import (
    WalkerState,
    build_walker_model,
    container_to_state,
    make_params,
    self_contact_report,
    state_to_container,
    step_walker,
)


@dataclass
class PolicyContext:
    """Everything a policy may condition on at one control tick."""

    tick: int
    sim_time: float  # reference-phase time (start offset + tick/rate)
    state: WalkerState
    obs: np.ndarray
    ref_q: np.ndarray
    ref_v: np.ndarray
    joint_q_obs: np.ndarray
    last_action: np.ndarray


@dataclass
class EpisodeRecord:
    start_time: float
    states_q: np.ndarray  # (E+1, 7) planar generalized positions
    states_v: np.ndarray  # (E+1, 7)
    actions: np.ndarray  # (E, 4) policy actions, pre-delay
    rewards: np.ndarray  # (E,)
    termination: str
    completed: bool
    action_delay: int
    friction: float
    com_offset: tuple
    nominal_offset: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.actions.shape[0]

    @property
    def failed(self) -> bool:
        return not self.completed


class DelayLine:
    """Fixed-length action queue; zero actions fill the line initially."""

    def __init__(self, delay: int, dim: int):
        self.buf = [np.zeros(dim) for _ in range(delay)]

    def push(self, action: np.ndarray) -> np.ndarray:
        if not self.buf:
            return action
        self.buf.append(np.asarray(action, dtype=np.float64))
        return self.buf.pop(0)


class WalkerEnv:
    """Bundles the walker model, dynamics params, and gains for episodes."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.model = build_walker_model(cfg.walker)
        self.params = make_params(cfg.walker)
        self.kp, self.kd = impedance_gains(self.model, cfg.impedance)
        self.control_dt = cfg.walker.dt * cfg.walker.substeps
        self.control_rate = 1.0 / self.control_dt

    def fk(self, state: WalkerState):
        q, v = state_to_container(state)
        return forward_kinematics(self.model, q, v)


def reset_from_reference(
    env: WalkerEnv, ref: ReferenceMotion, t0: float, rng: np.random.Generator, noisy: bool = True
) -> WalkerState:
    q, v = ref.sample(t0)
    state = container_to_state(q, v)
    if noisy:
        rn = env.cfg.randomization
        state.q[0] += rng.uniform(-rn.reset_position_noise, rn.reset_position_noise)
        state.q[1] += rng.uniform(-rn.reset_position_noise, rn.reset_position_noise) * 0.5
        state.q[2] += rng.uniform(-rn.reset_position_noise, rn.reset_position_noise)
        state.q[3:] += rng.uniform(-rn.reset_position_noise, rn.reset_position_noise, 4)
        state.v += rng.uniform(-rn.reset_velocity_noise, rn.reset_velocity_noise, 7)
    return state


def run_episode(
    env: WalkerEnv,
    policy,
    ref: ReferenceMotion,
    sampler=None,
    rng: np.random.Generator | None = None,
    start_time: float | None = None,
    max_duration: float | None = None,
    randomize: bool | None = None,
    perturb_range: tuple | None = None,
    obs_flags: ObsFlags = ObsFlags(),
    compute_obs_rewards: bool = True,
) -> EpisodeRecord:
    """Roll one tracking episode at 50 Hz.

    The start phase comes from the sampler (or ``start_time``); the state is
    initialized from the reference plus reset noise. Per-episode draws:
    friction, nominal-pose offset (applied to setpoints and observed joint
    positions), trunk CoM offset, and an action delay line. Root velocity
    impulses fire at the configured period. The outcome is reported back to
    the sampler.
    """
    rng = rng or np.random.default_rng(0)
    cfg = env.cfg
    rn = cfg.randomization
    randomize = rn.enabled if randomize is None else randomize

    if start_time is None:
        if sampler is not None:
            start_time = sampler.sample_start(rng, duration=max(0.0, ref.duration - 1.0))
        else:
            start_time = 0.0
    t0 = float(min(start_time, ref.duration))

    state = reset_from_reference(env, ref, t0, rng, noisy=randomize)

    if randomize:
        friction = float(rng.uniform(*rn.friction_range))
        nominal_offset = rng.uniform(-rn.nominal_joint_offset, rn.nominal_joint_offset, env.model.n_joints)
        com_offset = (float(rng.uniform(-rn.com_offset, rn.com_offset)), float(rng.uniform(-rn.com_offset, rn.com_offset)))
        delay = int(rng.integers(rn.action_delay_range[0], rn.action_delay_range[1] + 1))
    else:
        friction = env.cfg.walker.friction
        nominal_offset = np.zeros(env.model.n_joints)
        com_offset = (0.0, 0.0)
        delay = 0

    p_range = rn.perturb_velocity_range if perturb_range is None else perturb_range
    perturbing = randomize if perturb_range is None else True

    horizon = ref.duration - t0
    if max_duration is not None:
        horizon = min(horizon, max_duration)
    n_steps = max(1, int(np.floor(horizon * env.control_rate)))

    delay_line = DelayLine(delay, env.model.n_joints)
    q_nominal_used = env.model.q_nominal + nominal_offset
    last_action = np.zeros(env.model.n_joints)
    next_perturb = rn.perturb_period

    states_q = np.zeros((n_steps + 1, 7))
    states_v = np.zeros((n_steps + 1, 7))
    actions = np.zeros((n_steps, env.model.n_joints))
    rewards = np.zeros(n_steps)
    termination = Termination.CONTINUE

    if hasattr(policy, "reset"):
        policy.reset(t0)

    steps_done = 0
    for k in range(n_steps):
        t = t0 + k / env.control_rate
        states_q[k] = state.q
        states_v[k] = state.v

        ref_q, ref_v = ref.sample(min(t, ref.duration))
        ref_kin = forward_kinematics(env.model, ref_q, ref_v)
        kin = env.fk(state)

        objective = anchored_targets(env.model, ref_kin, kin.pose(env.model.anchor_body))
        joint_q_obs = state.q[3:] - nominal_offset
        if compute_obs_rewards:
            obs = build_actor_obs(
                env.model,
                kin,
                ref_q[7:],
                ref_v[6:],
                objective.anchor_desired,
                joint_q_obs,
                state.v[3:],
                last_action,
                flags=obs_flags,
            )
        else:
            obs = None
        ctx = PolicyContext(
            tick=k,
            sim_time=t,
            state=state,
            obs=obs,
            ref_q=ref_q,
            ref_v=ref_v,
            joint_q_obs=joint_q_obs,
            last_action=last_action,
        )
        action = np.asarray(policy.act(k, t, state, ctx), dtype=np.float64)
        actions[k] = action

        applied = delay_line.push(action)
        q_des = action_to_setpoint(applied, env.model, env.kp, cfg.impedance.action_scale_factor, q_nominal=q_nominal_used)
        state = step_walker(state, q_des, env.params, (env.kp, env.kd), mu=friction, com_offset=com_offset)

        if perturbing and t + 1.0 / env.control_rate - t0 >= next_perturb:
            ang = rng.uniform(0, 2 * np.pi)
            mag = rng.uniform(p_range[0], p_range[1])
            state.v[0] += mag * np.cos(ang)
            state.v[1] += mag * np.sin(ang)
            next_perturb += rn.perturb_period

        kin_after = env.fk(state)
        if compute_obs_rewards:
            r_task, _ = task_reward(objective, kin_after, cfg.rewards)
            penalties = regularization_penalties(
                state.q[3:], action, last_action, self_contact_report(state, env.params), env.model, cfg.rewards
            )
            rewards[k] = total_reward(r_task, penalties, cfg.rewards)
        last_action = action
        steps_done = k + 1

        ref_ee_heights = np.array([ref_kin.p[b][2] for b in env.model.ee_bodies])
        termination = check_termination(env.model, kin_after, objective, ref_ee_heights, cfg.termination)
        if termination is not Termination.CONTINUE:
            break

    states_q[steps_done] = state.q
    states_v[steps_done] = state.v
    completed = termination is Termination.CONTINUE

    record = EpisodeRecord(
        start_time=t0,
        states_q=states_q[: steps_done + 1],
        states_v=states_v[: steps_done + 1],
        actions=actions[:steps_done],
        rewards=rewards[:steps_done],
        termination=termination.value,
        completed=completed,
        action_delay=delay,
        friction=friction,
        com_offset=com_offset,
        nominal_offset=nominal_offset,
    )
    if sampler is not None:
        sampler.record_episode(min(int(t0), sampler.bins - 1), record.failed)
    return record
