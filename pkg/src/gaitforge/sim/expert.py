"""Scripted experts: the walker gait generator (reference source and
distillation teacher) and a cruise controller for the navigator.

The walker expert is a phase-indexed sinusoidal hip/knee pattern plus
stabilizing feedback (speed-proportional foot placement and pitch damping).
The feedback is part of the expert's action, so distillation data carries a
genuine state->action law rather than an open-loop tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import GaitConfig, ImpedanceConfig, WalkerConfig
from ..kinematics import ReferenceMotion, RobotModel
from ..mdp import action_scale, impedance_gains
from .walker import (
    JOINT_NAMES,
    BODY_NAMES,
    WalkerParams,
    WalkerState,
    make_params,
    state_to_container,
    step_walker,
)


class GaitUnstable(RuntimeError):
    pass


def gait_joint_targets(t: float, state: WalkerState, cfg: GaitConfig, v_target: float | None = None) -> np.ndarray:
    """Joint setpoints [hipL, kneeL, hipR, kneeR] at time t.

    Positive hip swings the leg backward in this convention, so the cyclic
    term enters negatively. Knees flex on a half-wave bump during swing.
    Feedback is split by role: the swing hip places the foot toward the
    capture point (forward foot for forward fall), the stance hip torques
    the trunk upright through the anchored foot.
    """
    ramp = min(1.0, t / cfg.ramp_time) if cfg.ramp_time > 0 else 1.0
    vt_full = cfg.speed_target if v_target is None else v_target
    vt = vt_full * ramp
    phi = 2.0 * np.pi * t / cfg.period
    vx, pitch, pitch_rate = state.v[0], state.q[2], state.v[2]
    # stride amplitude follows the commanded speed; the sign reverses the
    # cycle for backward walking
    scale = vt_full / cfg.speed_amp_ref if cfg.speed_amp_ref > 0 else 1.0
    mag = float(np.clip(abs(scale), cfg.speed_amp_min, cfg.speed_amp_max))
    amp = cfg.hip_amplitude * mag * (1.0 if scale >= 0 else -1.0)
    # swing-ness in [0, 1] per leg; the same half-wave shapes the knee bump
    sw_l = max(0.0, np.sin(phi + cfg.knee_phase))
    sw_r = max(0.0, np.sin(phi + np.pi + cfg.knee_phase))
    cap = cfg.feedback_cap
    place = np.clip(-cfg.k_place * vx - cfg.k_err * (vx - vt), -cap, cap)
    # speed regulated through a forward-lean target held by the posture servo
    lean = float(np.clip(cfg.k_lean * (vt - vx), -cfg.lean_max, cfg.lean_max))
    perr = pitch - lean
    upright = np.clip(cfg.k_pitch * perr + cfg.k_pitch_rate * pitch_rate, -cap, cap)
    knee_servo = np.clip(cfg.k_knee_pitch * perr + cfg.k_knee_pitch_rate * pitch_rate, -cap, cap)
    # stance sweep bias: extra backward hip on the planted leg translates
    # the trunk forward over the anchored plates
    drive = np.clip(cfg.k_drive * (vt - vx), -cap, cap)
    stance_l = (1.0 - sw_l) * (upright + drive)
    stance_r = (1.0 - sw_r) * (upright + drive)
    hip_l = -amp * ramp * np.sin(phi) + sw_l * place + stance_l
    hip_r = -amp * ramp * np.sin(phi + np.pi) + sw_r * place + stance_r
    knee_l = cfg.crouch + cfg.knee_amplitude * ramp * sw_l + (1.0 - sw_l) * knee_servo
    knee_r = cfg.crouch + cfg.knee_amplitude * ramp * sw_r + (1.0 - sw_r) * knee_servo
    return np.array([hip_l, knee_l, hip_r, knee_r])


@dataclass
class WalkerExpert:
    """Gait phase-locked to reference time; emits normalized actions.

    Velocity-like feedback inputs are low-passed so the action labels stay
    smooth; balance authority is preserved (validated under kicks)."""

    model: RobotModel
    gait: GaitConfig
    kp: np.ndarray
    smoothing: float = 1.0  # EMA step per 50 Hz tick on (vx, pitch_rate); 1 = off
    _filt: np.ndarray = None

    def reset(self, start_time: float):
        self._filt = None

    def act(self, tick: int, sim_time: float, state: WalkerState, obs=None) -> np.ndarray:
        raw = np.array([state.v[0], state.v[2]])
        if self._filt is None:
            self._filt = raw.copy()
        else:
            self._filt += self.smoothing * (raw - self._filt)
        smoothed = WalkerState(state.q.copy(), state.v.copy())
        smoothed.v[0] = self._filt[0]
        smoothed.v[2] = self._filt[1]
        q_des = gait_joint_targets(sim_time, smoothed, self.gait)
        alpha = action_scale(self.model, self.kp)
        return (q_des - self.model.q_nominal) / alpha


def scripted_gait_rollout(
    gait: GaitConfig,
    walker_cfg: WalkerConfig | None = None,
    impedance: ImpedanceConfig | None = None,
    smoothing: float | None = None,
) -> tuple[ReferenceMotion, np.ndarray]:
    """Run the gait closed-loop from settled standing; record the resulting
    state trajectory as a ReferenceMotion (50 Hz) plus the normalized expert
    actions. Deterministic. Raises GaitUnstable if the walker falls or
    pitches over during generation. The expert's input smoothing must match
    whatever the episodes use, so it is part of the gait config."""
    from ..sim.walker import build_walker_model

    walker_cfg = walker_cfg or WalkerConfig()
    impedance = impedance or ImpedanceConfig()
    model = build_walker_model(walker_cfg)
    params = make_params(walker_cfg)
    kp, kd = impedance_gains(model, impedance)
    expert = WalkerExpert(model, gait, kp, smoothing=smoothing if smoothing is not None else gait.smoothing)
    control_rate = 1.0 / (walker_cfg.dt * walker_cfg.substeps)

    # settle to static standing against the gait's t=0 posture (crouch
    # included) so the cycle starts without a configuration jump
    state = WalkerState(np.array([0.0, 0.505, 0.0, *walker_cfg.nominal_pose]), np.zeros(7))
    rest_targets = gait_joint_targets(0.0, state, gait)
    for _ in range(int(1.0 * control_rate)):
        state = step_walker(state, rest_targets, params, (kp, kd))

    n_steps = int(round(gait.duration * control_rate))
    frames_q = np.zeros((n_steps + 1, 7 + model.n_joints))
    frames_v = np.zeros((n_steps + 1, 6 + model.n_joints))
    actions = np.zeros((n_steps, model.n_joints))
    alpha = action_scale(model, kp)
    head_min = 0.2 * walker_cfg.nominal_head_height
    for k in range(n_steps + 1):
        frames_q[k], frames_v[k] = state_to_container(state)
        if k == n_steps:
            break
        t = k / control_rate
        a = expert.act(k, t, state)
        actions[k] = a
        q_des = model.q_nominal + alpha * a
        state = step_walker(state, q_des, params, (kp, kd))
        head_z = state.q[1] + walker_cfg.head_offset * np.cos(state.q[2])
        if head_z < head_min or abs(state.q[2]) > 1.2:
            raise GaitUnstable(f"gait fell at t={t:.2f}s")
    motion = ReferenceMotion(
        rate=control_rate,
        frames_q=frames_q,
        frames_v=frames_v,
        joint_names=list(JOINT_NAMES),
        body_names=list(BODY_NAMES),
    )
    return motion, actions


@dataclass
class NavigatorCruiseExpert:
    """Piecewise cruise segments: accelerate to a random velocity target,
    hold, stop, or arc. Gives the navigator dataset enough coverage of
    speeds, turns, and stops for guidance to steer within distribution."""

    seed: int
    v_max: float = 0.9
    segment_time: tuple = (1.0, 3.0)
    k_v: float = 3.0
    rng: np.random.Generator = None
    _t_next: float = 0.0
    _v_target: np.ndarray = None
    _w_target: float = 0.0

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        self._v_target = np.zeros(2)

    def reset(self, start_time: float = 0.0):
        self._t_next = 0.0
        self._v_target = np.zeros(2)
        self._w_target = 0.0

    def _draw_segment(self, sim_time: float):
        self._t_next = sim_time + self.rng.uniform(*self.segment_time)
        kind = self.rng.uniform()
        if kind < 0.2:  # full stop
            self._v_target = np.zeros(2)
            self._w_target = 0.0
        elif kind < 0.55:  # straight cruise at random heading/speed
            ang = self.rng.uniform(0, 2 * np.pi)
            speed = self.rng.uniform(0.15, self.v_max)
            self._v_target = speed * np.array([np.cos(ang), np.sin(ang)])
            self._w_target = 0.0
        else:  # arc: rotate the velocity target while moving
            ang = self.rng.uniform(0, 2 * np.pi)
            speed = self.rng.uniform(0.15, self.v_max)
            self._v_target = speed * np.array([np.cos(ang), np.sin(ang)])
            self._w_target = self.rng.uniform(-1.5, 1.5)

    def act(self, tick: int, sim_time: float, state, obs=None) -> np.ndarray:
        if sim_time >= self._t_next:
            self._draw_segment(sim_time)
        if self._w_target != 0.0:
            dt_seg = self._t_next - sim_time
            c, s = np.cos(self._w_target * 0.02), np.sin(self._w_target * 0.02)
            self._v_target = np.array(
                [c * self._v_target[0] - s * self._v_target[1], s * self._v_target[0] + c * self._v_target[1]]
            )
        acc = self.k_v * (self._v_target - state.vel)
        return np.array([acc[0], acc[1], self._w_target])
