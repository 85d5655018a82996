"""Differentiable trajectory costs with analytic gradients: joystick
velocity tracking, waypoint stop-at-goal, and SDF obstacle clearance
through a relaxed log barrier. Plus the planar SDF primitives.

Costs evaluate on denormalized windows. ``value`` returns a scalar,
``grad`` the gradient over the future-state block only (actions get no
gradient). Analytic gradients are guarded by finite-difference tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._accel import NUMBA_ENABLED, njit
from .dataset import EncodingSpec

POS = slice(0, 2)  # planar root position dims in the global block
VEL = slice(3, 5)  # planar root linear velocity dims
YAW = 8  # rotation-vector z component


class EmptyScene(ValueError):
    pass


def relaxed_barrier(x: float, delta: float) -> float:
    """-ln(x) above delta; quadratic extension below, C1 at the knot."""
    if x >= delta:
        return -np.log(x)
    return -np.log(delta) + 0.5 * (((x - 2.0 * delta) / delta) ** 2 - 1.0)


def relaxed_barrier_grad(x: float, delta: float) -> float:
    if x >= delta:
        return -1.0 / x
    return (x - 2.0 * delta) / delta**2


def _barrier_vec(x: np.ndarray, delta: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    hi = x >= delta
    out[hi] = -np.log(x[hi])
    q = (x[~hi] - 2.0 * delta) / delta
    out[~hi] = -np.log(delta) + 0.5 * (q * q - 1.0)
    return out


def _barrier_grad_vec(x: np.ndarray, delta: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    hi = x >= delta
    out[hi] = -1.0 / x[hi]
    out[~hi] = (x[~hi] - 2.0 * delta) / delta**2
    return out


# ---------------------------------------------------------------------------
# Signed distance field
# ---------------------------------------------------------------------------

CIRCLE = 0
BOX = 1


@dataclass
class Sdf:
    """Scene of planar primitives; query returns (distance, unit gradient).

    Ties between equidistant primitives break toward the lowest index.
    """

    kinds: np.ndarray  # (P,) int: CIRCLE | BOX
    params: np.ndarray  # (P, 4): circle cx cy r _; box cx cy hx hy

    @staticmethod
    def from_primitives(primitives: list) -> "Sdf":
        """primitives: dicts {kind: 'circle', center, radius} or
        {kind: 'box', center, half_extents}."""
        if not primitives:
            raise EmptyScene("scene must contain at least one primitive")
        kinds, params = [], []
        for p in primitives:
            if p["kind"] == "circle":
                kinds.append(CIRCLE)
                params.append([p["center"][0], p["center"][1], p["radius"], 0.0])
            elif p["kind"] == "box":
                kinds.append(BOX)
                params.append([p["center"][0], p["center"][1], p["half_extents"][0], p["half_extents"][1]])
            else:
                raise ValueError(f"unknown primitive kind {p['kind']!r}")
        return Sdf(np.asarray(kinds, dtype=np.int64), np.asarray(params, dtype=np.float64))

    def to_primitives(self) -> list:
        out = []
        for k, p in zip(self.kinds, self.params):
            if k == CIRCLE:
                out.append({"kind": "circle", "center": [p[0], p[1]], "radius": p[2]})
            else:
                out.append({"kind": "box", "center": [p[0], p[1]], "half_extents": [p[2], p[3]]})
        return out

    def query(self, point: np.ndarray) -> tuple[float, np.ndarray]:
        d, gx, gy = _sdf_query(self.kinds, self.params, float(point[0]), float(point[1]))
        return d, np.array([gx, gy])

    def query_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        fn = _sdf_batch_numba if NUMBA_ENABLED else _sdf_batch_numpy
        return fn(self.kinds, self.params, pts)


def _primitive_sdf(kind: int, p: np.ndarray, x: float, y: float) -> tuple[float, float, float]:
    if kind == CIRCLE:
        dx, dy = x - p[0], y - p[1]
        n = np.sqrt(dx * dx + dy * dy)
        if n < 1e-12:
            return -p[2], 1.0, 0.0
        return n - p[2], dx / n, dy / n
    # axis-aligned box
    qx, qy = abs(x - p[0]) - p[2], abs(y - p[1]) - p[3]
    sx = 1.0 if x >= p[0] else -1.0
    sy = 1.0 if y >= p[1] else -1.0
    if qx > 0.0 or qy > 0.0:
        ox, oy = max(qx, 0.0), max(qy, 0.0)
        n = np.sqrt(ox * ox + oy * oy)
        return n, sx * ox / n, sy * oy / n
    if qx > qy:
        return qx, sx, 0.0
    return qy, 0.0, sy


def _sdf_query(kinds: np.ndarray, params: np.ndarray, x: float, y: float) -> tuple[float, float, float]:
    best = np.inf
    bgx = bgy = 0.0
    for i in range(kinds.shape[0]):
        d, gx, gy = _primitive_sdf(int(kinds[i]), params[i], x, y)
        if d < best:
            best, bgx, bgy = d, gx, gy
    return best, bgx, bgy


def _batch_source(nb: bool):
    def sdf_batch(kinds, params, pts):
        n = pts.shape[0]
        dist = np.empty(n)
        grad = np.empty((n, 2))
        for j in range(n):
            x, y = pts[j, 0], pts[j, 1]
            best = np.inf
            bgx = 0.0
            bgy = 0.0
            for i in range(kinds.shape[0]):
                kind = kinds[i]
                p = params[i]
                if kind == 0:
                    dx = x - p[0]
                    dy = y - p[1]
                    nn = np.sqrt(dx * dx + dy * dy)
                    if nn < 1e-12:
                        d, gx, gy = -p[2], 1.0, 0.0
                    else:
                        d, gx, gy = nn - p[2], dx / nn, dy / nn
                else:
                    qx = abs(x - p[0]) - p[2]
                    qy = abs(y - p[1]) - p[3]
                    sx = 1.0 if x >= p[0] else -1.0
                    sy = 1.0 if y >= p[1] else -1.0
                    if qx > 0.0 or qy > 0.0:
                        ox = qx if qx > 0.0 else 0.0
                        oy = qy if qy > 0.0 else 0.0
                        nn = np.sqrt(ox * ox + oy * oy)
                        d, gx, gy = nn, sx * ox / nn, sy * oy / nn
                    elif qx > qy:
                        d, gx, gy = qx, sx, 0.0
                    else:
                        d, gx, gy = qy, 0.0, sy
                if d < best:
                    best, bgx, bgy = d, gx, gy
            dist[j] = best
            grad[j, 0] = bgx
            grad[j, 1] = bgy
        return dist, grad

    if nb:
        return njit(cache=True)(sdf_batch)
    return sdf_batch


_sdf_batch_numpy = _batch_source(nb=False)
_sdf_batch_numba = _batch_source(nb=True) if NUMBA_ENABLED else _sdf_batch_numpy


# ---------------------------------------------------------------------------
# Trajectory costs
# ---------------------------------------------------------------------------


@dataclass
class DenormWindow:
    """Denormalized future block handed to guidance costs."""

    future_states: np.ndarray  # (H, ds) physical units
    spec: EncodingSpec
    dt: float = 0.02


class GuidanceCost:
    """Contract: value(window) scalar, grad(window) d(value)/d(future_states)."""

    def value(self, win: DenormWindow) -> float:
        raise NotImplementedError

    def grad(self, win: DenormWindow) -> np.ndarray:
        raise NotImplementedError


@dataclass
class JoystickCost(GuidanceCost):
    """Half squared deviation of the planar root velocity from the stick."""

    g_v: np.ndarray  # (2,) target planar velocity, character frame

    def value(self, win: DenormWindow) -> float:
        dv = win.future_states[:, VEL] - np.asarray(self.g_v)
        return 0.5 * float(np.sum(dv * dv))

    def grad(self, win: DenormWindow) -> np.ndarray:
        g = np.zeros_like(win.future_states)
        g[:, VEL] = win.future_states[:, VEL] - np.asarray(self.g_v)
        return g


@dataclass
class TurnCost(GuidanceCost):
    """Forward-speed plus yaw-rate flavored joystick (speed, yaw-rate mode).

    Forward speed reads the velocity component along each step's own yaw;
    yaw rate is the finite difference of the rotation-vector z channel.
    """

    speed: float
    yaw_rate: float
    w_speed: float = 1.0
    w_yaw: float = 1.0

    def value(self, win: DenormWindow) -> float:
        s = win.future_states
        yawv = s[:, YAW]
        fwd = np.cos(yawv) * s[:, 3] + np.sin(yawv) * s[:, 4]
        c = 0.5 * self.w_speed * float(np.sum((fwd - self.speed) ** 2))
        dyaw = np.diff(yawv) / win.dt
        c += 0.5 * self.w_yaw * float(np.sum((dyaw - self.yaw_rate) ** 2))
        return c

    def grad(self, win: DenormWindow) -> np.ndarray:
        s = win.future_states
        g = np.zeros_like(s)
        yawv = s[:, YAW]
        cy, sy = np.cos(yawv), np.sin(yawv)
        fwd = cy * s[:, 3] + sy * s[:, 4]
        e = self.w_speed * (fwd - self.speed)
        g[:, 3] += e * cy
        g[:, 4] += e * sy
        g[:, YAW] += e * (-sy * s[:, 3] + cy * s[:, 4])
        dyaw = np.diff(yawv) / win.dt
        ey = self.w_yaw * (dyaw - self.yaw_rate) / win.dt
        g[1:, YAW] += ey
        g[:-1, YAW] -= ey
        return g


@dataclass
class WaypointCost(GuidanceCost):
    """Distance-blended goal cost: position error far away, velocity
    penalty near the goal (the blend distance is detached from the
    gradient)."""

    g_p: np.ndarray  # (2,) goal, character frame
    blend: float = 2.0

    def _weights(self, win: DenormWindow):
        dp = win.future_states[:, POS] - np.asarray(self.g_p)
        d = np.linalg.norm(dp, axis=1)
        w_vel = np.exp(-self.blend * d)
        return dp, 1.0 - w_vel, w_vel

    def value(self, win: DenormWindow) -> float:
        dp, w_pos, w_vel = self._weights(win)
        vel = win.future_states[:, VEL]
        return float(np.sum(w_pos * np.sum(dp * dp, axis=1) + w_vel * np.sum(vel * vel, axis=1)))

    def grad(self, win: DenormWindow) -> np.ndarray:
        dp, w_pos, w_vel = self._weights(win)
        g = np.zeros_like(win.future_states)
        g[:, POS] = 2.0 * w_pos[:, None] * dp
        g[:, VEL] = 2.0 * w_vel[:, None] * win.future_states[:, VEL]
        return g


@dataclass
class SdfCost(GuidanceCost):
    """Relaxed barrier on the clearance (SDF minus proxy radius) of every
    body proxy at every future step.

    Proxy world positions are reconstructed from the window: per-step yaw
    (rotation-vector z) rotates the per-body local offsets, added to the
    planar root position; ``frame`` then maps the window's character frame
    into the world the SDF lives in.
    """

    sdf: Sdf
    radii: np.ndarray  # (B,)
    delta: float = 0.1
    frame: tuple = (0.0, 0.0, 0.0)  # (x, y, yaw) of character frame in world
    weight: float = 1.0

    def _proxies(self, win: DenormWindow):
        s = win.future_states
        H = s.shape[0]
        B = win.spec.n_bodies
        # local body xy in each step's own footprint frame
        local = s[:, 9 : 9 + 3 * B].reshape(H, B, 3)[:, :, :2]
        yawv = s[:, YAW]
        cy, sy = np.cos(yawv), np.sin(yawv)
        # rotate into the character frame, translate by root xy
        px = cy[:, None] * local[:, :, 0] - sy[:, None] * local[:, :, 1] + s[:, 0:1]
        py = sy[:, None] * local[:, :, 0] + cy[:, None] * local[:, :, 1] + s[:, 1:2]
        # character frame -> world
        fx, fy, fyaw = self.frame
        cf, sf = np.cos(fyaw), np.sin(fyaw)
        wx = cf * px - sf * py + fx
        wy = sf * px + cf * py + fy
        return local, yawv, (px, py), np.stack([wx, wy], axis=-1)

    def value(self, win: DenormWindow) -> float:
        _, _, _, world = self._proxies(win)
        H, B, _ = world.shape
        d, _ = self.sdf.query_batch(world.reshape(-1, 2))
        clear = d - np.tile(np.asarray(self.radii), H)
        return self.weight * float(np.sum(_barrier_vec(clear, self.delta)))

    def grad(self, win: DenormWindow) -> np.ndarray:
        s = win.future_states
        local, yawv, _, world = self._proxies(win)
        H, B, _ = world.shape
        d, gsdf = self.sdf.query_batch(world.reshape(-1, 2))
        clear = d - np.tile(np.asarray(self.radii), H)
        db = self.weight * _barrier_grad_vec(clear, self.delta)
        gw = (db[:, None] * gsdf).reshape(H, B, 2)  # d cost / d world xy
        fx, fy, fyaw = self.frame
        cf, sf = np.cos(fyaw), np.sin(fyaw)
        # back through the frame rotation to character-frame coordinates
        gx = cf * gw[:, :, 0] + sf * gw[:, :, 1]
        gy = -sf * gw[:, :, 0] + cf * gw[:, :, 1]
        g = np.zeros_like(s)
        g[:, 0] = gx.sum(axis=1)
        g[:, 1] = gy.sum(axis=1)
        cy, sy = np.cos(yawv), np.sin(yawv)
        # d proxy / d yaw = R'(yaw) @ local
        dpx = -sy[:, None] * local[:, :, 0] - cy[:, None] * local[:, :, 1]
        dpy = cy[:, None] * local[:, :, 0] - sy[:, None] * local[:, :, 1]
        g[:, YAW] = np.sum(gx * dpx + gy * dpy, axis=1)
        # d proxy / d local offsets (body-pos dims)
        B_ = win.spec.n_bodies
        glocal = np.zeros((H, B_, 3))
        glocal[:, :, 0] = gx * cy[:, None] + gy * sy[:, None]
        glocal[:, :, 1] = -gx * sy[:, None] + gy * cy[:, None]
        g[:, 9 : 9 + 3 * B_] = glocal.reshape(H, 3 * B_)
        return g


@dataclass
class WeightedSum(GuidanceCost):
    """Linear combination; value and grad are the weighted sums."""

    costs: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    def value(self, win: DenormWindow) -> float:
        return float(sum(w * c.value(win) for c, w in zip(self.costs, self.weights)))

    def grad(self, win: DenormWindow) -> np.ndarray:
        g = np.zeros_like(win.future_states)
        for c, w in zip(self.costs, self.weights):
            g += w * c.grad(win)
        return g


def finite_difference_grad(cost: GuidanceCost, win: DenormWindow, eps: float = 1e-6) -> np.ndarray:
    """Central differences over the future-state block (test oracle)."""
    g = np.zeros_like(win.future_states)
    base = win.future_states.copy()
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            hi = base.copy()
            lo = base.copy()
            hi[i, j] += eps
            lo[i, j] -= eps
            g[i, j] = (
                cost.value(DenormWindow(hi, win.spec, win.dt)) - cost.value(DenormWindow(lo, win.spec, win.dt))
            ) / (2 * eps)
    return g
