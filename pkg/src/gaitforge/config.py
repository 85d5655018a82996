"""The single configuration document.

Every tunable in the pipeline (rewards, impedance, sampler, sim, diffusion,
guidance, bench, service) lives in one YAML file; one default file serves
every motion. Code-side defaults mirror configs/default.yaml so the file is
optional for library use.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml


@dataclass
class RewardConfig:
    sigma_p: float = 0.3  # m
    sigma_r: float = 0.4  # rad
    sigma_v: float = 1.0  # m/s
    sigma_w: float = 3.0  # rad/s
    lambda_limit: float = 1.0
    lambda_smooth: float = 0.1
    lambda_contact: float = 0.5
    contact_force_threshold: float = 5.0  # N
    anchor_global_reward: bool = False
    sigma_p_anchor: float = 0.3
    sigma_r_anchor: float = 0.4

    def validate(self):
        for name in ("sigma_p", "sigma_r", "sigma_v", "sigma_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("lambda_limit", "lambda_smooth", "lambda_contact"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class ImpedanceConfig:
    natural_frequency: float = 10.0  # Hz by default; see frequency_in_hz
    damping_ratio: float = 2.0  # overdamped
    action_scale_factor: float = 0.25
    frequency_in_hz: bool = True  # False: treat natural_frequency as rad/s

    @property
    def omega_n(self) -> float:
        import math

        return 2.0 * math.pi * self.natural_frequency if self.frequency_in_hz else self.natural_frequency

    def validate(self):
        if self.natural_frequency <= 0:
            raise ValueError("natural_frequency must be > 0")
        if self.damping_ratio < 1:
            raise ValueError("damping_ratio must be >= 1")


@dataclass
class TerminationConfig:
    max_anchor_height_error: float = 0.32  # m
    max_anchor_tilt_error: float = 1.0  # rad, roll+pitch geodesic
    max_ee_height_deviation: float = 0.45  # m


@dataclass
class SamplerConfig:
    ema_step: float = 0.05
    kernel_decay: float = 0.8
    kernel_window: int = 5
    uniform_mix: float = 0.1


@dataclass
class RandomizationConfig:
    friction_range: tuple = (0.4, 1.0)
    nominal_joint_offset: float = 0.03  # rad, uniform +-
    com_offset: float = 0.02  # m, uniform +- on torso CoM (x and z)
    perturb_velocity_range: tuple = (0.0, 0.25)  # m/s
    perturb_period: float = 1.0  # s
    action_delay_range: tuple = (0, 1)  # control steps, inclusive; ~20 ms latency at 50 Hz
    reset_position_noise: float = 0.02  # m / rad
    reset_velocity_noise: float = 0.1  # m/s / rad/s
    enabled: bool = True

    def validate(self):
        for name in ("friction_range", "perturb_velocity_range", "action_delay_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered (lo <= hi)")


@dataclass
class WalkerConfig:
    # masses sum to ~10 kg; pelvis-heavy keeps the trunk pendulum slow
    mass_pelvis: float = 4.5
    mass_torso: float = 2.0
    mass_head: float = 0.5
    mass_thigh: float = 0.8
    mass_shank: float = 0.5
    mass_foot: float = 0.2
    len_thigh: float = 0.25
    len_shank: float = 0.25
    torso_offset: float = 0.30  # pelvis -> torso CoM, m
    head_offset: float = 0.50  # pelvis -> head, m
    heel: float = 0.05  # m behind ankle point
    toe: float = 0.10  # m ahead of ankle point
    foot_mount: float = 0.15  # rad; plate is horizontal at this shank angle
    gravity: float = 9.81
    dt: float = 0.002  # 500 Hz physics
    substeps: int = 10  # -> 50 Hz control
    gear_ratio: float = 10.0
    motor_inertia: float = 1.0e-4  # kg m^2
    torque_limit: float = 40.0  # N m
    hip_limits: tuple = (-1.3, 1.3)  # soft, rad
    knee_limits: tuple = (-0.1, 2.4)
    nominal_pose: tuple = (0.0, 0.154, 0.0, 0.154)  # hipL kneeL hipR kneeR: crouch stance
    contact_kn: float = 2.0e4  # N/m
    contact_dn: float = 200.0  # N s/m
    contact_kt: float = 4000.0  # N/m tangential anchor spring
    contact_dt: float = 50.0  # N s/m
    friction: float = 0.8
    self_contact_k: float = 1.0e3  # report-only proxy force
    self_contact_radius: float = 0.06
    nominal_head_height: float = 1.0  # m; fall when head < 20% of this


@dataclass
class NavigatorConfig:
    dt: float = 0.02
    v_max: float = 1.0
    yaw_rate_max: float = 2.0
    accel_max: float = 2.0
    damping: float = 0.6
    proxy_offsets: tuple = ((0.15, 0.0), (-0.15, 0.0), (0.0, 0.12), (0.0, -0.12))
    proxy_radii: tuple = (0.12, 0.12, 0.12, 0.12)
    root_radius: float = 0.18


@dataclass
class GaitConfig:
    # cycle shape and feedback gains found by evolutionary search against
    # survival-under-perturbation + speed-tracking fitness (see benchmarks)
    period: float = 0.7454  # s
    hip_amplitude: float = 0.0739  # rad
    knee_amplitude: float = 0.3868  # rad
    knee_phase: float = 0  # rad, swing-knee lead
    crouch: float = 0.1502  # rad baseline knee bend
    ramp_time: float = 1.0  # s amplitude ramp from standstill
    speed_target: float = 0.35  # m/s
    speed_amp_ref: float = 0.33  # speed at unit stride amplitude
    speed_amp_min: float = 0.35  # stride scale floor
    speed_amp_max: float = 1.6
    # stabilizing feedback (part of the scripted expert, recorded in actions)
    k_place: float = 0.9659  # swing-hip foot placement per m/s of velocity
    k_err: float = 1.163  # swing-hip placement per m/s of speed error
    k_pitch: float = 3.5  # stance-hip trunk pitch correction
    k_pitch_rate: float = 0.6071
    k_knee_pitch: float = 4.5  # stance-knee posture servo
    k_knee_pitch_rate: float = 0.7127
    k_lean: float = 0.4503  # forward-lean target per m/s of speed error
    k_drive: float = 0.247  # stance-hip sweep per m/s of speed error
    feedback_cap: float = 0.9516  # rad bound on each feedback channel
    smoothing: float = 0.9484  # EMA step on (vx, pitch_rate) inputs; 1 = off
    lean_max: float = 0.1145  # rad
    duration: float = 16.0  # s of reference to generate
    data_speeds: tuple = (-0.5, -0.3, 0.15, 0.33, 0.45)  # reference set for collection


@dataclass
class DiffusionConfig:
    history: int = 4  # N
    horizon: int = 16  # H
    action_horizon: int = 8  # H_a, loss-masked beyond
    denoise_steps: int = 20  # T
    schedule: str = "cosine"  # or "linear"
    beta_start: float = 1.0e-3  # linear schedule only
    beta_end: float = 0.35
    layers: int = 3
    heads: int = 4
    embed_dim: int = 96  # desk scale; paper-scale preset is 6/4/512
    mlp_ratio: int = 4
    dropout: float = 0.3  # attention dropout
    learning_rate: float = 3.0e-4
    batch_size: int = 48
    train_steps: int = 4000
    grad_clip: float = 1.0
    action_loss_weight: float = 1.0  # per-part loss balance
    guidance_weight: float = 1.0
    guidance_ramp: bool = False
    replan_period: int = 2  # control steps between plans (~paper's per-tick replanning)
    planner_latency: int = 0  # simulated control-step latency
    dtype: str = "float32"


@dataclass
class GuidanceConfig:
    barrier_delta: float = 0.1  # m
    waypoint_blend: float = 2.0  # the exp(-blend*d) constant
    sdf_weight: float = 1.0


@dataclass
class BenchConfig:
    runs: int = 50
    walk_duration: float = 15.0  # s
    perturb_range: tuple = (0.0, 0.25)  # m/s, toy-scaled
    perturb_period: float = 1.0  # s
    fall_head_fraction: float = 0.2  # of nominal head height
    joystick_segment_time: float = 3.0  # s
    # forward, backward, "turn left"/"turn right" mapped to +-forward speed
    walker_joystick_speeds: tuple = (0.33, -0.25, 0.37, -0.15)
    navigator_joystick: tuple = ((0.6, 0.0), (-0.6, 0.0), (0.0, 0.6), (0.0, -0.6))
    velocity_error_max: float = 0.2  # m/s per segment
    waypoint_distance: float = 3.0  # m
    waypoint_tolerance: float = 0.2  # m
    waypoint_speed_max: float = 0.1  # m/s
    waypoint_timeout: float = 20.0  # s
    # targets used by `eval` for its exit code
    target_walk_perturb: float = 0.8
    target_joystick: float = 0.8
    target_waypoint: float = 0.9
    target_obstacle: float = 0.9


@dataclass
class ServiceConfig:
    bind: str = "127.0.0.1"
    port: int = 8765
    control_rate: float = 50.0  # Hz
    broadcast_rate: float = 25.0  # Hz
    command_token: str = ""  # empty: first client commands


@dataclass
class Config:
    rewards: RewardConfig = field(default_factory=RewardConfig)
    impedance: ImpedanceConfig = field(default_factory=ImpedanceConfig)
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    walker: WalkerConfig = field(default_factory=WalkerConfig)
    navigator: NavigatorConfig = field(default_factory=NavigatorConfig)
    gait: GaitConfig = field(default_factory=GaitConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def validate(self):
        self.rewards.validate()
        self.impedance.validate()
        self.randomization.validate()


def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(cls, data):
    if not is_dataclass(cls):
        return data
    kwargs = {}
    for f in fields(cls):
        if data is not None and f.name in data:
            val = data[f.name]
            if is_dataclass(f.type) or (isinstance(f.default_factory, type) and is_dataclass(f.default_factory)):
                kwargs[f.name] = _from_plain(f.default_factory, val)
            elif isinstance(f.default, tuple) and isinstance(val, list):
                kwargs[f.name] = tuple(tuple(v) if isinstance(v, list) else v for v in val)
            else:
                kwargs[f.name] = val
    return cls(**kwargs)


def load_config(path: str | Path | None = None) -> Config:
    """Defaults, optionally overlaid with a YAML document."""
    if path is None:
        cfg = Config()
    else:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        cfg = _from_plain(Config, data)
    cfg.validate()
    return cfg


def dump_config(cfg: Config, path: str | Path):
    with open(path, "w") as fh:
        yaml.safe_dump(_to_plain(cfg), fh, sort_keys=False)


def config_dict(cfg) -> dict:
    return _to_plain(cfg)


def config_hash(cfg) -> str:
    blob = json.dumps(_to_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def replace(cfg, **kwargs):
    return dataclasses.replace(cfg, **kwargs)
