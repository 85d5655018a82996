"""Tracking MDP surface: anchored objectives, actor/critic observations,
impedance action mapping, rewards, and termination.

All quantities are world-frame unless noted. Desired poses are re-anchored
through footprint frames: the target keeps the reference's height and
relative layout while the planar position and yaw follow the robot.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ImpedanceConfig, RewardConfig, TerminationConfig
from .geom import Pose, Twist, compose, footprint, inverse, rot6d, rot_z, so3_log, yaw
from .kinematics import BodyKin, DimensionMismatch, RobotModel


class MissingBody(KeyError):
    pass


@dataclass
class TrackingObjective:
    """Anchored per-target-body desired poses/twists plus the raw anchor."""

    anchor_desired: Pose
    body_ids: tuple
    desired_p: np.ndarray  # (n, 3)
    desired_R: np.ndarray  # (n, 3, 3)
    desired_v: np.ndarray  # (n, 3)
    desired_w: np.ndarray  # (n, 3)

    def index_of(self, body: int) -> int:
        try:
            return self.body_ids.index(body)
        except ValueError as e:
            raise MissingBody(f"body {body} not in objective") from e

    def desired_pose(self, body: int) -> Pose:
        i = self.index_of(body)
        return Pose(self.desired_p[i], self.desired_R[i])

    def desired_twist(self, body: int) -> Twist:
        i = self.index_of(body)
        return Twist(self.desired_v[i], self.desired_w[i], "world")


def anchored_targets(
    model: RobotModel,
    ref_kin: BodyKin,
    robot_anchor: Pose,
    rotate_twists: bool = False,
) -> TrackingObjective:
    """Re-anchor reference body targets under the robot.

    The anchor body keeps the reference pose verbatim. Every other target
    pose is mapped by ``footprint(robot_anchor) . footprint(ref_anchor)^-1``,
    which translates the xy origin under the robot and aligns yaw while
    preserving heights and the reference-relative layout. Twists are copied
    unchanged (``rotate_twists`` applies the yaw correction instead; off by
    default).
    """
    a = model.anchor_body
    if ref_kin.p.shape[0] != model.n_bodies:
        raise MissingBody("reference kinematics must cover all bodies")
    shift = compose(footprint(robot_anchor), inverse(footprint(ref_kin.pose(a))))
    ids = tuple(model.target_bodies)
    n = len(ids)
    P = np.zeros((n, 3))
    R = np.zeros((n, 3, 3))
    V = np.zeros((n, 3))
    Wv = np.zeros((n, 3))
    for i, b in enumerate(ids):
        if b == a:
            P[i] = ref_kin.p[b]
            R[i] = ref_kin.R[b]
        else:
            P[i] = shift.R @ ref_kin.p[b] + shift.p
            R[i] = shift.R @ ref_kin.R[b]
        if rotate_twists:
            V[i] = shift.R @ ref_kin.v[b]
            Wv[i] = shift.R @ ref_kin.w[b]
        else:
            V[i] = ref_kin.v[b]
            Wv[i] = ref_kin.w[b]
    return TrackingObjective(
        anchor_desired=ref_kin.pose(a),
        body_ids=ids,
        desired_p=P,
        desired_R=R,
        desired_v=V,
        desired_w=Wv,
    )


@dataclass(frozen=True)
class ObsFlags:
    drop_linear: bool = False


def build_actor_obs(
    model: RobotModel,
    kin: BodyKin,
    ref_joint_q: np.ndarray,
    ref_joint_v: np.ndarray,
    anchor_desired: Pose,
    joint_q: np.ndarray,
    joint_v: np.ndarray,
    last_action: np.ndarray,
    flags: ObsFlags = ObsFlags(),
) -> np.ndarray:
    """Policy observation: reference phase, anchor tracking error, root
    twist in the root frame, joint state, previous action."""
    J = model.n_joints
    for name, arr, want in (
        ("ref_joint_q", ref_joint_q, J),
        ("ref_joint_v", ref_joint_v, J),
        ("joint_q", joint_q, J),
        ("joint_v", joint_v, J),
        ("last_action", last_action, J),
    ):
        if np.asarray(arr).shape[0] != want:
            raise DimensionMismatch(f"{name} must have length {want}")
    a = model.anchor_body
    pos_err = anchor_desired.p - kin.p[a]
    rot_err = rot6d(anchor_desired.R @ kin.R[a].T)
    root_R = kin.R[0]
    v_local = root_R.T @ kin.v[0]
    w_local = root_R.T @ kin.w[0]
    parts = [ref_joint_q, ref_joint_v]
    if flags.drop_linear:
        parts += [rot_err, w_local]
    else:
        parts += [pos_err, rot_err, v_local, w_local]
    parts += [joint_q, joint_v, last_action]
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def actor_obs_dim(model: RobotModel, flags: ObsFlags = ObsFlags()) -> int:
    J = model.n_joints
    base = 2 * J + 6 + 3 + 3 * J
    return base if flags.drop_linear else base + 3 + 3


def build_critic_obs(model: RobotModel, kin: BodyKin, actor_obs: np.ndarray) -> np.ndarray:
    """Actor observation plus anchor-relative pose of every body."""
    a = model.anchor_body
    inv_anchor = inverse(kin.pose(a))
    extra = []
    for b in range(model.n_bodies):
        rel_p = inv_anchor.R @ kin.p[b] + inv_anchor.p
        rel_R = inv_anchor.R @ kin.R[b]
        extra.append(rel_p)
        extra.append(rot6d(rel_R))
    return np.concatenate([actor_obs, *extra])


def impedance_gains(model: RobotModel, cfg: ImpedanceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint stiffness/damping from reflected inertia: kp = I w^2,
    kd = 2 I zeta w."""
    inertia = model.reflected_inertia()
    w = cfg.omega_n
    kp = inertia * w * w
    kd = 2.0 * inertia * cfg.damping_ratio * w
    return kp, kd


def action_scale(model: RobotModel, kp: np.ndarray, factor: float = 0.25) -> np.ndarray:
    return factor * model.torque_limit / kp


def action_to_setpoint(
    action: np.ndarray,
    model: RobotModel,
    kp: np.ndarray,
    factor: float = 0.25,
    q_nominal: np.ndarray | None = None,
) -> np.ndarray:
    """q_des = q_nominal + alpha * a. Intentionally unclipped: setpoints are
    torque intermediates, not position targets."""
    qn = model.q_nominal if q_nominal is None else q_nominal
    return qn + action_scale(model, kp, factor) * np.asarray(action, dtype=np.float64)


def setpoint_to_torque(
    q_des: np.ndarray,
    joint_q: np.ndarray,
    joint_v: np.ndarray,
    kp: np.ndarray,
    kd: np.ndarray,
    model: RobotModel,
) -> np.ndarray:
    raw = kp * (q_des - joint_q) - kd * joint_v
    return np.clip(raw, -model.torque_limit, model.torque_limit)


def task_reward(
    objective: TrackingObjective,
    kin: BodyKin,
    cfg: RewardConfig,
) -> tuple[float, dict]:
    """Sum of Gaussian kernels over mean squared tracking errors.

    Returns (r_task, per-channel kernel values). 0 < r_task <= 4.
    """
    n = len(objective.body_ids)
    ep = er = ev = ew = 0.0
    for i, b in enumerate(objective.body_ids):
        if b >= kin.p.shape[0]:
            raise MissingBody(f"body {b} missing from kinematics")
        ep += float(np.sum((objective.desired_p[i] - kin.p[b]) ** 2))
        er += float(np.sum(so3_log(objective.desired_R[i] @ kin.R[b].T) ** 2))
        ev += float(np.sum((objective.desired_v[i] - kin.v[b]) ** 2))
        ew += float(np.sum((objective.desired_w[i] - kin.w[b]) ** 2))
    means = {"p": ep / n, "R": er / n, "v": ev / n, "w": ew / n}
    kernels = {
        "p": float(np.exp(-means["p"] / cfg.sigma_p**2)),
        "R": float(np.exp(-means["R"] / cfg.sigma_r**2)),
        "v": float(np.exp(-means["v"] / cfg.sigma_v**2)),
        "w": float(np.exp(-means["w"] / cfg.sigma_w**2)),
    }
    return float(sum(kernels.values())), kernels


def regularization_penalties(
    joint_q: np.ndarray,
    action: np.ndarray,
    last_action: np.ndarray,
    contact_report: np.ndarray,
    model: RobotModel,
    cfg: RewardConfig,
) -> tuple[float, float, float]:
    """(r_limit, r_smooth, r_contact): quadratic soft-limit excess, action
    rate, and the count of non-end-effector bodies above the self-contact
    force threshold."""
    over = np.maximum(0.0, joint_q - model.q_upper)
    under = np.maximum(0.0, model.q_lower - joint_q)
    r_limit = float(np.sum(over**2) + np.sum(under**2))
    r_smooth = float(np.sum((np.asarray(action) - np.asarray(last_action)) ** 2))
    ee = set(model.ee_bodies)
    mask = np.array([b not in ee for b in range(model.n_bodies)])
    r_contact = float(np.count_nonzero(np.asarray(contact_report)[mask] > cfg.contact_force_threshold))
    return r_limit, r_smooth, r_contact


def total_reward(
    r_task: float,
    penalties: tuple[float, float, float],
    cfg: RewardConfig,
    anchor_term: float = 0.0,
) -> float:
    r_limit, r_smooth, r_contact = penalties
    r = r_task - cfg.lambda_limit * r_limit - cfg.lambda_smooth * r_smooth - cfg.lambda_contact * r_contact
    if cfg.anchor_global_reward:
        r += anchor_term
    return float(r)


def anchor_global_term(anchor_desired: Pose, anchor_actual: Pose, cfg: RewardConfig) -> float:
    """Global anchor tracking kernel pair (position, rotation)."""
    ep = float(np.sum((anchor_desired.p - anchor_actual.p) ** 2))
    er = float(np.sum(so3_log(anchor_desired.R @ anchor_actual.R.T) ** 2))
    return float(np.exp(-ep / cfg.sigma_p_anchor**2) + np.exp(-er / cfg.sigma_r_anchor**2))


class Termination(Enum):
    CONTINUE = "continue"
    FALL = "fall"
    TRACKING_FAILURE = "tracking_failure"


def tilt_error(R_desired: np.ndarray, R_actual: np.ndarray) -> float:
    """Geodesic angle of the yaw-removed rotation error (roll+pitch only)."""
    E = R_desired @ R_actual.T
    try:
        E_noyaw = rot_z(-yaw(E)) @ E
    except Exception:
        return float(np.pi / 2)  # pitch at the singularity is a max-tilt event
    return float(np.linalg.norm(so3_log(E_noyaw)))


def check_termination(
    model: RobotModel,
    kin: BodyKin,
    objective: TrackingObjective,
    ref_ee_heights: np.ndarray,
    cfg: TerminationConfig,
) -> Termination:
    """Fall on anchor height/tilt error; tracking failure on end-effector
    height deviation from the reference."""
    a = model.anchor_body
    anchor_desired = objective.desired_pose(a)
    if abs(anchor_desired.p[2] - kin.p[a][2]) > cfg.max_anchor_height_error:
        return Termination.FALL
    if tilt_error(anchor_desired.R, kin.R[a]) > cfg.max_anchor_tilt_error:
        return Termination.FALL
    for i, b in enumerate(model.ee_bodies):
        if abs(kin.p[b][2] - ref_ee_heights[i]) > cfg.max_ee_height_deviation:
            return Termination.TRACKING_FAILURE
    return Termination.CONTINUE
