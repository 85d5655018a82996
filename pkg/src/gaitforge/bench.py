"""Evaluation protocols: walk-under-perturbation, joystick command
scripts, and waypoint/obstacle navigation; JSON reports with per-run logs.

Protocol mappings on the sagittal walker (which cannot turn): the four
joystick segments forward / backward / "turn left" / "turn right" become
signed forward-speed targets. On the holonomic navigator they become
planar velocity targets (turns as lateral velocity); both mappings are
named in the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .dataset import walker_step_kinematics
from .geom import inverse
from .guidance import JoystickCost, Sdf, SdfCost, WaypointCost, WeightedSum
from .kinematics import ReferenceMotion
from .mdp import action_to_setpoint
from .sim.episode import DelayLine, WalkerEnv
from .sim.navigator import NavigatorState, proxy_positions, proxy_radii, step_navigator
from .sim.walker import step_walker


@dataclass
class RunLog:
    seed: int
    duration: float
    success: bool
    fell: bool
    starvation: int = 0
    mean_reward: float = 0.0
    detail: dict = field(default_factory=dict)


@dataclass
class BenchmarkReport:
    task: str
    runs: int
    successes: int
    falls: int
    mapping: str
    config_hash: str
    logs: list

    @property
    def success_rate(self) -> float:
        return self.successes / self.runs if self.runs else 0.0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "runs": self.runs,
            "successes": self.successes,
            "falls": self.falls,
            "success_rate": self.success_rate,
            "mapping": self.mapping,
            "config_hash": self.config_hash,
            "logs": [
                {
                    "seed": l.seed,
                    "duration": l.duration,
                    "success": l.success,
                    "fell": l.fell,
                    "starvation": l.starvation,
                    "mean_reward": l.mean_reward,
                    **l.detail,
                }
                for l in self.logs
            ],
        }

    def save(self, path: str | Path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def summary(self) -> str:
        lines = [
            f"task            {self.task}",
            f"runs            {self.runs}",
            f"successes       {self.successes} ({100 * self.success_rate:.0f}%)",
            f"falls           {self.falls}",
            f"mapping         {self.mapping}",
        ]
        return "\n".join(lines)


def _head_height(cfg: Config, q: np.ndarray) -> float:
    return q[1] + cfg.walker.head_offset * np.cos(q[2])


def rollout_walker_policy(
    env: WalkerEnv,
    policy,
    ref: ReferenceMotion,
    duration: float,
    rng: np.random.Generator,
    perturb_range: tuple | None = None,
    perturb_period: float = 1.0,
    fall_fraction: float = 0.2,
    segment_probe=None,
):
    """Free-running policy rollout from the reference start; only the fall
    criterion ends it early. Returns (fell, time survived, vx trace)."""
    from .sim.walker import container_to_state

    cfg = env.cfg
    q0, v0 = ref.sample(0.0)
    state = container_to_state(q0, v0)
    policy.reset(0.0)
    n = int(duration * env.control_rate)
    head_min = fall_fraction * cfg.walker.nominal_head_height
    vx = np.zeros(n)
    next_kick = perturb_period
    fell_at = None
    for k in range(n):
        t = k / env.control_rate
        action = np.asarray(policy.act(k, t, state, None), dtype=np.float64)
        q_des = action_to_setpoint(action, env.model, env.kp, cfg.impedance.action_scale_factor)
        state = step_walker(state, q_des, env.params, (env.kp, env.kd))
        if perturb_range is not None and t + 1.0 / env.control_rate >= next_kick:
            ang = rng.uniform(0, 2 * np.pi)
            mag = rng.uniform(perturb_range[0], perturb_range[1])
            state.v[0] += mag * np.cos(ang)
            state.v[1] += mag * np.sin(ang)
            next_kick += perturb_period
        vx[k] = state.v[0]
        if segment_probe is not None:
            segment_probe(k, state)
        if _head_height(cfg, state.q) < head_min:
            fell_at = (k + 1) / env.control_rate
            break
    return fell_at, vx[: k + 1]


def walk_perturb(policy_factory, cfg: Config, ref: ReferenceMotion, runs: int | None = None, seed0: int = 0, config_hash: str = "") -> BenchmarkReport:
    """15 s of walking with a root velocity kick every second; failure is a
    fall (head below the configured fraction of nominal height)."""
    env = WalkerEnv(cfg)
    bc = cfg.bench
    runs = bc.runs if runs is None else runs
    logs = []
    falls = 0
    for i in range(runs):
        rng = np.random.default_rng(seed0 + i)
        policy = policy_factory(rng)
        fell_at, vx = rollout_walker_policy(
            env, policy, ref, bc.walk_duration, rng,
            perturb_range=bc.perturb_range, perturb_period=bc.perturb_period,
            fall_fraction=bc.fall_head_fraction,
        )
        fell = fell_at is not None
        falls += fell
        logs.append(
            RunLog(
                seed=seed0 + i,
                duration=fell_at if fell else bc.walk_duration,
                success=not fell,
                fell=fell,
                starvation=getattr(policy, "starvation", 0),
                detail={"mean_vx": float(np.mean(vx))},
            )
        )
    return BenchmarkReport(
        task="walk-perturb", runs=runs, successes=runs - falls, falls=falls,
        mapping="perturbations: planar kicks, uniform direction and magnitude",
        config_hash=config_hash, logs=logs,
    )


def walk_perturb_model(model, cfg: Config, ref: ReferenceMotion, runs: int | None = None, seed0: int = 0, config_hash: str = "") -> BenchmarkReport:
    """walk_perturb for a diffusion checkpoint: all runs step in lockstep
    and share batched denoiser calls."""
    from .diffusion.executor import BatchedDiffusionPolicies
    from .sim.walker import container_to_state

    env = WalkerEnv(cfg)
    bc = cfg.bench
    runs = bc.runs if runs is None else runs
    bank = BatchedDiffusionPolicies(
        model, lambda st: walker_step_kinematics(env, st.q, st.v), runs,
        np.random.default_rng(seed0 - 1),
        replan_period=cfg.diffusion.replan_period,
        weight=cfg.diffusion.guidance_weight, ramp=cfg.diffusion.guidance_ramp,
    )
    q0, v0 = ref.sample(0.0)
    states = {i: container_to_state(q0, v0) for i in range(runs)}
    rngs = [np.random.default_rng(seed0 + i) for i in range(runs)]
    next_kick = np.full(runs, bc.perturb_period)
    fell_at = {}
    vx_sum = np.zeros(runs)
    n_ticks = int(bc.walk_duration * env.control_rate)
    head_min = bc.fall_head_fraction * cfg.walker.nominal_head_height
    for k in range(n_ticks):
        t = k / env.control_rate
        if not states:
            break
        actions = bank.act_all(k, states)
        for i in list(states):
            st = states[i]
            q_des = action_to_setpoint(actions[i], env.model, env.kp, cfg.impedance.action_scale_factor)
            st = step_walker(st, q_des, env.params, (env.kp, env.kd))
            if t + 1.0 / env.control_rate >= next_kick[i]:
                ang = rngs[i].uniform(0, 2 * np.pi)
                mag = rngs[i].uniform(bc.perturb_range[0], bc.perturb_range[1])
                st.v[0] += mag * np.cos(ang)
                st.v[1] += mag * np.sin(ang)
                next_kick[i] += bc.perturb_period
            vx_sum[i] += st.v[0]
            if _head_height(cfg, st.q) < head_min:
                fell_at[i] = (k + 1) / env.control_rate
                del states[i]
            else:
                states[i] = st
    logs = [
        RunLog(
            seed=seed0 + i,
            duration=fell_at.get(i, bc.walk_duration),
            success=i not in fell_at,
            fell=i in fell_at,
            starvation=int(bank.starvation[i]),
            detail={"mean_vx": float(vx_sum[i] / n_ticks)},
        )
        for i in range(runs)
    ]
    falls = len(fell_at)
    return BenchmarkReport(
        task="walk-perturb", runs=runs, successes=runs - falls, falls=falls,
        mapping="perturbations: planar kicks, uniform direction and magnitude",
        config_hash=config_hash, logs=logs,
    )


def joystick_walker(model, cfg: Config, ref: ReferenceMotion, runs: int | None = None, seed0: int = 0, guided: bool = True, config_hash: str = "") -> BenchmarkReport:
    """Four 3 s segments of signed forward-speed targets, steered by the
    joystick cost on the root velocity channel. Success: no fall and mean
    per-segment speed error under the threshold. Lockstep-batched."""
    from .diffusion.executor import BatchedDiffusionPolicies
    from .sim.walker import container_to_state

    env = WalkerEnv(cfg)
    bc = cfg.bench
    runs = bc.runs if runs is None else runs
    seg_ticks = int(bc.joystick_segment_time * env.control_rate)
    speeds = list(bc.walker_joystick_speeds)
    duration = len(speeds) * bc.joystick_segment_time
    command = {"v": speeds[0]}

    def builder(i, anchor):
        if not guided:
            return None
        return JoystickCost(np.array([command["v"], 0.0]))

    bank = BatchedDiffusionPolicies(
        model, lambda st: walker_step_kinematics(env, st.q, st.v), runs,
        np.random.default_rng(seed0 - 1), guidance_builders=builder,
        replan_period=cfg.diffusion.replan_period,
        weight=cfg.diffusion.guidance_weight, ramp=cfg.diffusion.guidance_ramp,
    )
    q0, v0 = ref.sample(0.0)
    states = {i: container_to_state(q0, v0) for i in range(runs)}
    fell_at = {}
    seg_err = np.zeros((runs, len(speeds)))
    seg_cnt = np.zeros((runs, len(speeds)))
    n_ticks = int(duration * env.control_rate)
    head_min = bc.fall_head_fraction * cfg.walker.nominal_head_height
    for k in range(n_ticks):
        if not states:
            break
        s = min(k // seg_ticks, len(speeds) - 1)
        command["v"] = speeds[s]
        actions = bank.act_all(k, states)
        for i in list(states):
            st = step_walker(
                states[i],
                action_to_setpoint(actions[i], env.model, env.kp, cfg.impedance.action_scale_factor),
                env.params, (env.kp, env.kd),
            )
            seg_err[i, s] += abs(st.v[0] - speeds[s])
            seg_cnt[i, s] += 1
            if _head_height(cfg, st.q) < head_min:
                fell_at[i] = (k + 1) / env.control_rate
                del states[i]
            else:
                states[i] = st
    logs = []
    successes = 0
    for i in range(runs):
        fell = i in fell_at
        errs = [float(seg_err[i, j] / seg_cnt[i, j]) if seg_cnt[i, j] else float("inf") for j in range(len(speeds))]
        ok = (not fell) and all(e < bc.velocity_error_max for e in errs)
        successes += ok
        logs.append(
            RunLog(
                seed=seed0 + i, duration=fell_at.get(i, duration), success=ok, fell=fell,
                starvation=int(bank.starvation[i]), detail={"segment_errors": errs},
            )
        )
    return BenchmarkReport(
        task="joystick-walker" + ("" if guided else "-unguided"),
        runs=runs, successes=successes, falls=len(fell_at),
        mapping="forward/backward/turn-left/turn-right -> signed forward-speed targets "
        + str(speeds),
        config_hash=config_hash, logs=logs,
    )


# ---------------------------------------------------------------------------
# Navigator protocols
# ---------------------------------------------------------------------------


def rollout_navigator_policy(policy, cfg: Config, duration: float, probe=None, start: NavigatorState | None = None):
    state = start.copy() if start is not None else NavigatorState.rest()
    policy.reset(0.0)
    n = int(duration / cfg.navigator.dt)
    traj = []
    for k in range(n):
        t = k * cfg.navigator.dt
        action = np.asarray(policy.act(k, t, state, None), dtype=np.float64)
        state = step_navigator(state, action, cfg.navigator)
        traj.append(state.copy())
        if probe is not None:
            probe(k, state)
    return traj


def _nav_bank(model, cfg, runs, seed0, builder):
    from .dataset import navigator_step_kinematics
    from .diffusion.executor import BatchedDiffusionPolicies

    return BatchedDiffusionPolicies(
        model, lambda st: navigator_step_kinematics(st, cfg.navigator), runs,
        np.random.default_rng(seed0 - 1), guidance_builders=builder,
        replan_period=cfg.diffusion.replan_period,
        weight=cfg.diffusion.guidance_weight, ramp=cfg.diffusion.guidance_ramp,
    )


def joystick_navigator(model, cfg: Config, runs: int | None = None, seed0: int = 0, guided: bool = True, config_hash: str = "") -> BenchmarkReport:
    """Velocity command script on the navigator: forward, backward, left,
    right (world-frame targets rotated into each plan's character frame)."""
    bc = cfg.bench
    runs = bc.runs if runs is None else runs
    segments = [np.asarray(v, dtype=np.float64) for v in cfg.bench.navigator_joystick]
    seg_ticks = int(bc.joystick_segment_time / cfg.navigator.dt)
    duration = len(segments) * bc.joystick_segment_time
    command = {"v": segments[0]}

    def builder(i, anchor):
        if not guided:
            return None
        return JoystickCost(anchor.R[:2, :2].T @ command["v"])

    bank = _nav_bank(model, cfg, runs, seed0, builder)
    states = {i: NavigatorState.rest() for i in range(runs)}
    n_ticks = int(duration / cfg.navigator.dt)
    seg_err = np.zeros((runs, len(segments)))
    seg_cnt = np.zeros((runs, len(segments)))
    for k in range(n_ticks):
        s = min(k // seg_ticks, len(segments) - 1)
        command["v"] = segments[s]
        actions = bank.act_all(k, states)
        for i in states:
            states[i] = step_navigator(states[i], actions[i], cfg.navigator)
            seg_err[i, s] += float(np.linalg.norm(states[i].vel - segments[s]))
            seg_cnt[i, s] += 1
    logs = []
    successes = 0
    for i in range(runs):
        errs = [float(seg_err[i, j] / seg_cnt[i, j]) for j in range(len(segments))]
        ok = all(e < bc.velocity_error_max for e in errs)
        successes += ok
        logs.append(
            RunLog(
                seed=seed0 + i, duration=duration, success=ok, fell=False,
                starvation=int(bank.starvation[i]), detail={"segment_errors": errs},
            )
        )
    return BenchmarkReport(
        task="joystick-navigator" + ("" if guided else "-unguided"),
        runs=runs, successes=successes, falls=0,
        mapping="forward/backward/turn-left/turn-right -> planar velocity targets "
        + str([list(map(float, s)) for s in segments]),
        config_hash=config_hash, logs=logs,
    )


def waypoint_and_obstacle(
    model,
    cfg: Config,
    runs: int | None = None,
    seed0: int = 0,
    scene: Sdf | None = None,
    config_hash: str = "",
) -> BenchmarkReport:
    """Reach a goal and stop there; with a scene, also require zero proxy
    penetrations along the whole trajectory. Runs step in lockstep; a run
    that reaches its goal keeps simulating (the stop must hold) but success
    latches at first arrival."""
    bc = cfg.bench
    runs = bc.runs if runs is None else runs
    radii = proxy_radii(cfg.navigator)
    goals = {}
    for i in range(runs):
        rng = np.random.default_rng(seed0 + i)
        ang = rng.uniform(-np.pi / 6, np.pi / 6)
        goals[i] = bc.waypoint_distance * np.array([np.cos(ang), np.sin(ang)])

    def builder(i, anchor):
        inv = inverse(anchor)
        g = goals[i]
        g_local = (inv.R @ np.array([g[0], g[1], 0.0]) + inv.p)[:2]
        cost = WaypointCost(g_local, blend=cfg.guidance.waypoint_blend)
        if scene is None:
            return cost
        yaw = float(np.arctan2(anchor.R[1, 0], anchor.R[0, 0]))
        sdf_cost = SdfCost(
            scene, radii, delta=cfg.guidance.barrier_delta,
            frame=(float(anchor.p[0]), float(anchor.p[1]), yaw),
            weight=cfg.guidance.sdf_weight,
        )
        return WeightedSum([cost, sdf_cost], [1.0, 1.0])

    bank = _nav_bank(model, cfg, runs, seed0, builder)
    states = {i: NavigatorState.rest() for i in range(runs)}
    reached_at = {}
    min_clearance = np.full(runs, np.inf)
    n_ticks = int(bc.waypoint_timeout / cfg.navigator.dt)
    for k in range(n_ticks):
        actions = bank.act_all(k, states)
        done_early = len(reached_at) == runs
        if done_early:
            break
        for i in states:
            states[i] = step_navigator(states[i], actions[i], cfg.navigator)
            if scene is not None:
                pts = proxy_positions(states[i], cfg.navigator)
                d, _ = scene.query_batch(pts)
                min_clearance[i] = min(min_clearance[i], float(np.min(d - radii)))
            if i not in reached_at:
                close = np.linalg.norm(states[i].pos - goals[i]) < bc.waypoint_tolerance
                slow = np.linalg.norm(states[i].vel) < bc.waypoint_speed_max
                if close and slow:
                    reached_at[i] = k * cfg.navigator.dt
    logs = []
    successes = 0
    for i in range(runs):
        ok = i in reached_at
        if scene is not None:
            ok = ok and min_clearance[i] >= 0.0
        successes += ok
        logs.append(
            RunLog(
                seed=seed0 + i,
                duration=reached_at.get(i, bc.waypoint_timeout),
                success=bool(ok), fell=False,
                starvation=int(bank.starvation[i]),
                detail={
                    "goal": [float(goals[i][0]), float(goals[i][1])],
                    "min_clearance": None if scene is None else float(min_clearance[i]),
                },
            )
        )
    return BenchmarkReport(
        task="waypoint" if scene is None else "waypoint-obstacle",
        runs=runs, successes=successes, falls=0,
        mapping="goal drawn on a +-30 degree arc at the configured distance",
        config_hash=config_hash, logs=logs,
    )
