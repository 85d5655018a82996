"""SO(3)/SE(3) primitives used throughout the tracking and diffusion stack.

Rotations are 3x3 matrices everywhere; quaternions (w, x, y, z) only appear
at file boundaries. Yaw follows the ZYX (yaw-pitch-roll) convention, so
``yaw(rot_z(a)) == a`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GimbalSingular(ValueError):
    """Pitch at +-pi/2: yaw of the ZYX decomposition is undefined."""


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation ``R`` then translation ``p`` (world <- local)."""

    p: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.R @ np.asarray(point, dtype=np.float64) + self.p


@dataclass(frozen=True)
class Twist:
    """Spatial velocity. ``frame`` tags the frame the components live in."""

    v: np.ndarray
    w: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))
        if self.frame not in ("world", "body"):
            raise ValueError(f"unknown twist frame {self.frame!r}")

    @staticmethod
    def zero(frame: str = "world") -> "Twist":
        return Twist(np.zeros(3), np.zeros(3), frame)


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.R @ b.p + a.p, a.R @ b.R)


def inverse(t: Pose) -> Pose:
    rt = t.R.T
    return Pose(-(rt @ t.p), rt)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw(R: np.ndarray) -> float:
    """Yaw of the ZYX Euler decomposition, in (-pi, pi].

    Raises GimbalSingular when pitch sits at +-pi/2 (|R[2,0]| ~ 1), where
    yaw and roll are not separable.
    """
    if abs(R[2, 0]) > 1.0 - 1e-9:
        raise GimbalSingular("pitch at +-pi/2, yaw undefined")
    return float(np.arctan2(R[1, 0], R[0, 0]))


def footprint(t: Pose) -> Pose:
    """Planar shadow of a pose: keep (x, y) and yaw, zero z/roll/pitch."""
    psi = yaw(t.R)
    return Pose(np.array([t.p[0], t.p[1], 0.0]), rot_z(psi))


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula; series fallback below 1e-10 rad."""
    phi = np.asarray(phi, dtype=np.float64)
    angle = float(np.linalg.norm(phi))
    K = np.array(
        [
            [0.0, -phi[2], phi[1]],
            [phi[2], 0.0, -phi[0]],
            [-phi[1], phi[0], 0.0],
        ]
    )
    if angle < 1e-10:
        return np.eye(3) + K + 0.5 * (K @ K)
    a, b = np.sin(angle) / angle, (1.0 - np.cos(angle)) / angle**2
    return np.eye(3) + a * K + b * (K @ K)


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z); stable for all angles (largest-pivot form)."""
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    tr = m00 + m11 + m22
    if tr > max(m00, m11, m22):
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 >= m11 and m00 >= m22:
        s = np.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 >= m22:
        s = np.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = np.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector with ||result|| <= pi.

    Extraction goes through the largest-pivot quaternion, which stays
    conditioned arbitrarily close to angle pi. At exactly pi the axis sign
    is ambiguous; the sign is fixed so the first nonzero component is
    positive, keeping runs reproducible.
    """
    q = matrix_to_quat(R)
    w = float(np.clip(q[0], -1.0, 1.0))
    vec = q[1:]
    n = float(np.linalg.norm(vec))
    if n < 1e-12:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(n, w)
    axis = vec / n
    if angle > np.pi:
        angle = 2.0 * np.pi - angle
        axis = -axis
    if abs(angle - np.pi) < 1e-12:
        for comp in axis:
            if abs(comp) > 1e-12:
                if comp < 0:
                    axis = -axis
                break
    return axis * angle


def rot6d(R: np.ndarray) -> np.ndarray:
    """First two columns of R, flattened (the continuous 6-D encoding)."""
    return np.concatenate([R[:, 0], R[:, 1]])


def rot6d_to_matrix(r6: np.ndarray) -> np.ndarray:
    """Gram-Schmidt reconstruction; inverse of rot6d on valid rotations."""
    a, b = np.asarray(r6[:3], dtype=np.float64), np.asarray(r6[3:6], dtype=np.float64)
    c0 = a / np.linalg.norm(a)
    b = b - np.dot(c0, b) * c0
    c1 = b / np.linalg.norm(b)
    c2 = np.cross(c0, c1)
    return np.stack([c0, c1, c2], axis=1)


def quat_slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation along the shorter arc."""
    q0 = np.asarray(q0, dtype=np.float64) / np.linalg.norm(q0)
    q1 = np.asarray(q1, dtype=np.float64) / np.linalg.norm(q1)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1, d = -q1, -d
    if d > 1.0 - 1e-12:
        q = q0 + u * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = np.arccos(np.clip(d, -1.0, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - u) * theta) / s) * q0 + (np.sin(u * theta) / s) * q1


@dataclass(frozen=True)
class _RandomRotations:
    """Test helper: uniform random rotations, with optional near-pi batch."""

    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_rng", np.random.default_rng(self.seed))

    def draw(self, n: int) -> np.ndarray:
        q = self._rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        return np.stack([quat_to_matrix(qi) for qi in q])

    def draw_near_pi(self, n: int, gap: float = 1e-4) -> np.ndarray:
        axes = self._rng.normal(size=(n, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        angles = np.pi - self._rng.uniform(0.0, gap, size=n)
        return np.stack([so3_exp(a * ang) for a, ang in zip(axes, angles)])
