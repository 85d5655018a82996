"""Top-down planar navigator: a damped double integrator with heading and
four fixed-offset collision proxies. Carrier environment for the guided
tasks (joystick, waypoint, obstacle avoidance)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import NavigatorConfig
from ..kinematics import RobotModel


@dataclass
class NavigatorState:
    pos: np.ndarray  # (2,) m
    heading: float  # rad
    vel: np.ndarray  # (2,) m/s world frame
    yaw_rate: float  # rad/s

    @staticmethod
    def rest() -> "NavigatorState":
        return NavigatorState(np.zeros(2), 0.0, np.zeros(2), 0.0)

    def copy(self) -> "NavigatorState":
        return NavigatorState(self.pos.copy(), self.heading, self.vel.copy(), self.yaw_rate)


def step_navigator(state: NavigatorState, action: np.ndarray, cfg: NavigatorConfig) -> NavigatorState:
    """One 50 Hz step. ``action = [ax, ay, yaw_rate_cmd]`` (world-frame
    acceleration); acceleration and speed are clamped, damping applies."""
    a = np.asarray(action, dtype=np.float64)
    acc = a[:2].copy()
    n = np.linalg.norm(acc)
    if n > cfg.accel_max:
        acc *= cfg.accel_max / n
    out = state.copy()
    out.vel = out.vel + cfg.dt * (acc - cfg.damping * out.vel)
    speed = np.linalg.norm(out.vel)
    if speed > cfg.v_max:
        out.vel *= cfg.v_max / speed
    out.pos = out.pos + cfg.dt * out.vel
    out.yaw_rate = float(np.clip(a[2], -cfg.yaw_rate_max, cfg.yaw_rate_max))
    out.heading = float((out.heading + cfg.dt * out.yaw_rate + np.pi) % (2 * np.pi) - np.pi)
    return out


def proxy_positions(state: NavigatorState, cfg: NavigatorConfig) -> np.ndarray:
    """World (x, y) of root plus the four heading-fixed proxies."""
    c, s = np.cos(state.heading), np.sin(state.heading)
    R = np.array([[c, -s], [s, c]])
    offsets = np.asarray(cfg.proxy_offsets, dtype=np.float64)
    return np.vstack([state.pos, state.pos + offsets @ R.T])


def proxy_radii(cfg: NavigatorConfig) -> np.ndarray:
    return np.array([cfg.root_radius, *cfg.proxy_radii])


NAV_BODY_NAMES = ["root", "proxy_fwd", "proxy_back", "proxy_left", "proxy_right"]


def build_navigator_model(cfg: NavigatorConfig | None = None) -> RobotModel:
    """Kinematic stand-in so the shared encoders can treat both
    environments uniformly (root + welded proxies, no joints)."""
    cfg = cfg or NavigatorConfig()
    offsets = np.asarray(cfg.proxy_offsets, dtype=np.float64)
    off_p = np.zeros((5, 3))
    off_p[1:, :2] = offsets
    return RobotModel(
        body_names=list(NAV_BODY_NAMES),
        parent=np.array([-1, 0, 0, 0, 0]),
        offset_p=off_p,
        offset_R=np.tile(np.eye(3), (5, 1, 1)),
        joint_of_body=np.array([-1, -1, -1, -1, -1]),
        joint_names=[],
        joint_axis=np.zeros((0, 3)),
        gear_ratio=np.zeros(0),
        motor_inertia=np.zeros(0),
        torque_limit=np.zeros(0),
        q_lower=np.zeros(0),
        q_upper=np.zeros(0),
        q_nominal=np.zeros(0),
        anchor_body=0,
        target_bodies=(0, 1, 2, 3, 4),
        ee_bodies=(),
    )


def nav_state_to_container(state: NavigatorState) -> tuple[np.ndarray, np.ndarray]:
    from ..geom import matrix_to_quat, rot_z

    q = np.zeros(7)
    v = np.zeros(6)
    q[0:2] = state.pos
    q[3:7] = matrix_to_quat(rot_z(state.heading))
    v[0:2] = state.vel
    v[5] = state.yaw_rate
    return q, v
