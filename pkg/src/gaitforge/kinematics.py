"""Kinematic tree, forward kinematics, and reference-motion containers.

Generalized coordinates use the full 3-D container everywhere:
``q = [base position (3), base quaternion wxyz (4), joint angles (J)]``,
``v = [base linear velocity (3), base angular velocity (3, world), joint
velocities (J)]``. Planar environments freeze the unused coordinates at
zero but speak the same container at every interface.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import Pose, Twist, quat_slerp, quat_to_matrix, so3_exp


class DimensionMismatch(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class RobotModel:
    """Rigid-body tree. Each non-root body hangs off its parent as
    ``T_b = T_parent . R_joint(q_j) . T_offset``: the (optional) revolute
    joint rotates about the parent frame origin, then the fixed offset
    carries the frame to the body origin. Serial chains therefore place
    each body frame at its distal joint point."""

    body_names: list
    parent: np.ndarray  # (B,) int, -1 for root
    offset_p: np.ndarray  # (B, 3) fixed offset, post-joint frame
    offset_R: np.ndarray  # (B, 3, 3)
    joint_of_body: np.ndarray  # (B,) int joint index or -1 (root/welded)
    joint_names: list
    joint_axis: np.ndarray  # (J, 3) unit, in the parent frame
    gear_ratio: np.ndarray  # (J,)
    motor_inertia: np.ndarray  # (J,) kg m^2
    torque_limit: np.ndarray  # (J,) N m
    q_lower: np.ndarray  # (J,) soft limits
    q_upper: np.ndarray
    q_nominal: np.ndarray  # (J,)
    anchor_body: int = 0
    target_bodies: tuple = ()
    ee_bodies: tuple = ()

    def __post_init__(self):
        B = len(self.body_names)
        if self.parent[0] != -1 or np.any(self.parent[1:] >= np.arange(1, B)):
            raise ValueError("bodies must be topologically ordered with a single root")
        if not self.target_bodies:
            raise ValueError("target body set must be nonempty")
        if self.anchor_body in self.ee_bodies:
            raise ValueError("anchor body cannot be an end effector")
        if np.any(self.torque_limit <= 0) or np.any(self.gear_ratio <= 0):
            raise ValueError("torque limits and gear ratios must be positive")
        if np.any(self.q_lower >= self.q_upper):
            raise ValueError("soft limits must satisfy q_lower < q_upper")

    @property
    def n_bodies(self) -> int:
        return len(self.body_names)

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def nq(self) -> int:
        return 7 + self.n_joints

    @property
    def nv(self) -> int:
        return 6 + self.n_joints

    def reflected_inertia(self) -> np.ndarray:
        return self.gear_ratio**2 * self.motor_inertia

    def body_index(self, name: str) -> int:
        return self.body_names.index(name)


@dataclass
class BodyKin:
    """Forward-kinematics output for every body, world frame."""

    p: np.ndarray  # (B, 3)
    R: np.ndarray  # (B, 3, 3)
    v: np.ndarray  # (B, 3) linear
    w: np.ndarray  # (B, 3) angular

    def pose(self, b: int) -> Pose:
        return Pose(self.p[b], self.R[b])

    def twist(self, b: int) -> Twist:
        return Twist(self.v[b], self.w[b], "world")


def forward_kinematics(model: RobotModel, q: np.ndarray, v: np.ndarray) -> BodyKin:
    """World pose and twist of every body; root pose equals the base of q."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape[0] != model.nq or v.shape[0] != model.nv:
        raise DimensionMismatch(
            f"expected q[{model.nq}], v[{model.nv}]; got q[{q.shape[0]}], v[{v.shape[0]}]"
        )
    B = model.n_bodies
    P = np.zeros((B, 3))
    R = np.zeros((B, 3, 3))
    V = np.zeros((B, 3))
    W = np.zeros((B, 3))
    P[0] = q[0:3]
    R[0] = quat_to_matrix(q[3:7])
    V[0] = v[0:3]
    W[0] = v[3:6]
    for b in range(1, B):
        par = model.parent[b]
        j = model.joint_of_body[b]
        if j >= 0:
            axis = model.joint_axis[j]
            R_pj = R[par] @ so3_exp(axis * q[7 + j])
            W[b] = W[par] + (R[par] @ axis) * v[6 + j]
        else:
            R_pj = R[par]
            W[b] = W[par]
        arm = R_pj @ model.offset_p[b]
        P[b] = P[par] + arm
        R[b] = R_pj @ model.offset_R[b]
        # the offset vector is rigid in the post-joint frame: it spins with W[b]
        V[b] = V[par] + np.cross(W[b], arm)
    return BodyKin(P, R, V, W)


@dataclass
class ReferenceMotion:
    """Rate-stamped keyframes of (q, v) with continuous-time sampling."""

    rate: float  # Hz
    frames_q: np.ndarray  # (F, 7 + J)
    frames_v: np.ndarray  # (F, 6 + J)
    joint_names: list = field(default_factory=list)
    body_names: list = field(default_factory=list)

    def __post_init__(self):
        self.frames_q = np.asarray(self.frames_q, dtype=np.float64)
        self.frames_v = np.asarray(self.frames_v, dtype=np.float64)
        norms = np.linalg.norm(self.frames_q[:, 3:7], axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("base quaternions must be unit norm")

    @property
    def n_frames(self) -> int:
        return self.frames_q.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_frames - 1) / self.rate

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Linear interpolation; slerp on the base quaternion."""
        if t < -1e-12 or t > self.duration + 1e-9:
            raise OutOfRange(f"t={t} outside [0, {self.duration}]")
        s = np.clip(t * self.rate, 0.0, self.n_frames - 1)
        i = int(np.floor(s))
        i = min(i, self.n_frames - 2) if self.n_frames > 1 else 0
        u = s - i
        if self.n_frames == 1 or u == 0.0:
            return self.frames_q[i].copy(), self.frames_v[i].copy()
        qa, qb = self.frames_q[i], self.frames_q[i + 1]
        q = qa + u * (qb - qa)
        q[3:7] = quat_slerp(qa[3:7], qb[3:7], u)
        vv = self.frames_v[i] + u * (self.frames_v[i + 1] - self.frames_v[i])
        return q, vv


_MAGIC = "gaitforge-ref-v1"


def save_reference(motion: ReferenceMotion, path: str | Path):
    """JSON header line + little-endian float32 (q, v) records."""
    header = {
        "magic": _MAGIC,
        "rate": motion.rate,
        "frame_count": motion.n_frames,
        "q_dim": int(motion.frames_q.shape[1]),
        "v_dim": int(motion.frames_v.shape[1]),
        "joint_names": list(motion.joint_names),
        "body_names": list(motion.body_names),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for i in range(motion.n_frames):
            fh.write(motion.frames_q[i].astype("<f4").tobytes())
            fh.write(motion.frames_v[i].astype("<f4").tobytes())


def load_reference(path: str | Path) -> ReferenceMotion:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("magic") != _MAGIC:
            raise ValueError(f"{path} is not a reference motion file")
        F, qd, vd = header["frame_count"], header["q_dim"], header["v_dim"]
        payload = fh.read()
    rec = struct.calcsize(f"<{qd + vd}f")
    if len(payload) != F * rec:
        raise ValueError("truncated reference motion file")
    data = np.frombuffer(payload, dtype="<f4").reshape(F, qd + vd).astype(np.float64)
    q = data[:, :qd].copy()
    # float32 storage denormalizes quaternions slightly; restore unit norm
    q[:, 3:7] /= np.linalg.norm(q[:, 3:7], axis=1, keepdims=True)
    return ReferenceMotion(
        rate=header["rate"],
        frames_q=q,
        frames_v=data[:, qd:],
        joint_names=header["joint_names"],
        body_names=header["body_names"],
    )
