"""Expert rollouts -> normalized training windows.

Two state representations are supported for the walker (and the body-pos
one for the navigator):

* body-pos: global root block (position, linear velocity, orientation
  rotation-vector, all relative to the character frame at the window's
  current timestep) plus per-body Cartesian positions and linear
  velocities expressed in each timestep's own footprint frame.
* joint-rot: the same global block plus joint angles and velocities.

Windows: history of N (state, action) pairs plus the current state, then a
future of H actions and H states; stride-1 slicing, never across episode
boundaries. Normalization is per state/action channel over everything
stored.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import Pose, footprint, inverse, so3_log
from .kinematics import forward_kinematics
from .sim.episode import EpisodeRecord, WalkerEnv
from .sim.navigator import NavigatorConfig, proxy_positions
from .sim.walker import state_to_container, WalkerState

BODY_POS = "body-pos"
JOINT_ROT = "joint-rot"


class EmptyDataset(RuntimeError):
    pass


@dataclass
class EncodingSpec:
    kind: str
    n_bodies: int
    n_joints: int

    @property
    def state_dim(self) -> int:
        if self.kind == BODY_POS:
            return 9 + 6 * self.n_bodies
        if self.kind == JOINT_ROT:
            return 9 + 2 * self.n_joints
        raise ValueError(f"unknown encoding kind {self.kind}")

    # global-block slices, shared by the guidance costs
    POS = slice(0, 3)
    VEL = slice(3, 6)
    ROTVEC = slice(6, 9)


@dataclass
class StepKinematics:
    """Per-timestep quantities every encoder draws from."""

    root_pose: Pose
    root_vel: np.ndarray  # (3,) world
    body_pos: np.ndarray  # (B, 3) world
    body_vel: np.ndarray  # (B, 3) world
    joint_q: np.ndarray
    joint_v: np.ndarray


def walker_step_kinematics(env: WalkerEnv, q7: np.ndarray, v7: np.ndarray) -> StepKinematics:
    state = WalkerState(np.asarray(q7, dtype=np.float64), np.asarray(v7, dtype=np.float64))
    q, v = state_to_container(state)
    kin = forward_kinematics(env.model, q, v)
    return StepKinematics(
        root_pose=kin.pose(0),
        root_vel=kin.v[0],
        body_pos=kin.p,
        body_vel=kin.v,
        joint_q=q[7:].copy(),
        joint_v=v[6:].copy(),
    )


def navigator_step_kinematics(nav_state, cfg: NavigatorConfig) -> StepKinematics:
    from .geom import rot_z
    from .sim.navigator import NavigatorState

    st: NavigatorState = nav_state
    p2 = proxy_positions(st, cfg)
    B = p2.shape[0]
    pos = np.zeros((B, 3))
    pos[:, :2] = p2
    vel = np.zeros((B, 3))
    # proxy velocity = root velocity + yaw_rate x offset
    rel = p2 - st.pos
    vel[:, 0] = st.vel[0] - st.yaw_rate * rel[:, 1]
    vel[:, 1] = st.vel[1] + st.yaw_rate * rel[:, 0]
    root_pose = Pose(np.array([st.pos[0], st.pos[1], 0.0]), rot_z(st.heading))
    return StepKinematics(
        root_pose=root_pose,
        root_vel=np.array([st.vel[0], st.vel[1], 0.0]),
        body_pos=pos,
        body_vel=vel,
        joint_q=np.zeros(0),
        joint_v=np.zeros(0),
    )


def global_block(step: StepKinematics, anchor: Pose) -> np.ndarray:
    """Root position / linear velocity / orientation rotation-vector,
    relative to the window's character frame ``anchor``."""
    inv_anchor = inverse(anchor)
    root_p = inv_anchor.R @ step.root_pose.p + inv_anchor.p
    root_v = inv_anchor.R @ step.root_vel
    rotvec = so3_log(inv_anchor.R @ step.root_pose.R)
    return np.concatenate([root_p, root_v, rotvec])


def local_block(step: StepKinematics, spec: EncodingSpec) -> np.ndarray:
    """Anchor-independent part: bodies in the step's own footprint frame
    (body-pos) or joint state (joint-rot)."""
    if spec.kind == BODY_POS:
        own = inverse(footprint(step.root_pose))
        local_p = (own.R @ step.body_pos.T).T + own.p
        local_v = (own.R @ step.body_vel.T).T
        return np.concatenate([local_p.ravel(), local_v.ravel()])
    return np.concatenate([step.joint_q, step.joint_v])


def encode_state(step: StepKinematics, spec: EncodingSpec, anchor: Pose) -> np.ndarray:
    """Encode one timestep against the window's character frame ``anchor``
    (the root footprint at the window's current timestep)."""
    return np.concatenate([global_block(step, anchor), local_block(step, spec)])


@dataclass
class WindowDataset:
    """Stride-1 trajectory windows plus normalization statistics."""

    kind: str
    history: int  # N
    horizon: int  # H
    state_dim: int
    action_dim: int
    hist_states: np.ndarray  # (n, N+1, ds) float32
    hist_actions: np.ndarray  # (n, N, da)
    future_states: np.ndarray  # (n, H, ds)
    future_actions: np.ndarray  # (n, H, da)
    state_mean: np.ndarray = None
    state_std: np.ndarray = None
    action_mean: np.ndarray = None
    action_std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def n_windows(self) -> int:
        return self.hist_states.shape[0]

    def compute_normalization(self):
        """Per-channel stats over every state/action occurrence stored.
        Constant channels (std < 1e-8) are pinned to std 1."""
        s_all = np.concatenate(
            [self.hist_states.reshape(-1, self.state_dim), self.future_states.reshape(-1, self.state_dim)]
        )
        a_all = np.concatenate(
            [self.hist_actions.reshape(-1, self.action_dim), self.future_actions.reshape(-1, self.action_dim)]
        )
        self.state_mean = s_all.mean(axis=0, dtype=np.float64)
        self.state_std = s_all.std(axis=0, dtype=np.float64)
        self.action_mean = a_all.mean(axis=0, dtype=np.float64)
        self.action_std = a_all.std(axis=0, dtype=np.float64)
        self.state_std[self.state_std < 1e-8] = 1.0
        self.action_std[self.action_std < 1e-8] = 1.0

    def normalize_states(self, x: np.ndarray) -> np.ndarray:
        return (x - self.state_mean) / self.state_std

    def normalize_actions(self, a: np.ndarray) -> np.ndarray:
        return (a - self.action_mean) / self.action_std

    def denormalize_states(self, x: np.ndarray) -> np.ndarray:
        return x * self.state_std + self.state_mean

    def denormalize_actions(self, a: np.ndarray) -> np.ndarray:
        return a * self.action_std + self.action_mean


def slice_windows(
    step_states: np.ndarray, actions: np.ndarray, history: int, horizon: int
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """One episode's encoded steps -> window tuples. A window anchored at t
    uses states t-N..t+H and actions t-N..t+H-1; anchors run while both
    ranges stay inside the episode."""
    E = actions.shape[0]
    out = []
    for t in range(history, E - horizon + 1):
        out.append(
            (
                step_states[t - history : t + 1],
                actions[t - history : t],
                step_states[t + 1 : t + 1 + horizon],
                actions[t : t + horizon],
            )
        )
    return out


def build_walker_windows(
    env: WalkerEnv,
    records: list[EpisodeRecord],
    kind: str,
    history: int,
    horizon: int,
    meta: dict | None = None,
) -> WindowDataset:
    spec = EncodingSpec(kind, env.model.n_bodies, env.model.n_joints)
    return _build_windows(
        [
            (
                [walker_step_kinematics(env, r.states_q[i], r.states_v[i]) for i in range(r.n_steps + 1)],
                r.actions,
            )
            for r in records
        ],
        spec,
        history,
        horizon,
        meta,
    )


def _build_windows(episodes, spec: EncodingSpec, history: int, horizon: int, meta: dict | None) -> WindowDataset:
    hs, ha, fs, fa = [], [], [], []
    for steps, actions in episodes:
        E = actions.shape[0]
        if E < history + horizon:
            continue
        # local blocks are anchor-independent: encode once per step
        locals_ = np.stack([local_block(s, spec) for s in steps])
        for t in range(history, E - horizon + 1):
            anchor = footprint(steps[t].root_pose)
            idx = range(t - history, t + 1 + horizon)
            glob = np.stack([global_block(steps[i], anchor) for i in idx])
            enc = np.concatenate([glob, locals_[t - history : t + 1 + horizon]], axis=1)
            hs.append(enc[: history + 1])
            fs.append(enc[history + 1 :])
            ha.append(actions[t - history : t])
            fa.append(actions[t : t + horizon])
    if not hs:
        raise EmptyDataset(f"no episode produced a full window (need {history + horizon} steps)")
    ds = WindowDataset(
        kind=spec.kind,
        history=history,
        horizon=horizon,
        state_dim=spec.state_dim,
        action_dim=ha[0].shape[1] if ha[0].size else 0,
        hist_states=np.stack(hs).astype(np.float32),
        hist_actions=np.stack(ha).astype(np.float32),
        future_states=np.stack(fs).astype(np.float32),
        future_actions=np.stack(fa).astype(np.float32),
        meta=dict(meta or {}),
    )
    ds.compute_normalization()
    return ds


_MANIFEST_KEYS = ("kind", "history", "horizon", "state_dim", "action_dim")


def save_dataset(ds: WindowDataset, path: str | Path):
    """JSON manifest + float32 window blocks in a sidecar binary."""
    path = Path(path)
    manifest = {k: getattr(ds, k) for k in _MANIFEST_KEYS}
    manifest.update(
        n_windows=ds.n_windows,
        state_mean=ds.state_mean.tolist(),
        state_std=ds.state_std.tolist(),
        action_mean=ds.action_mean.tolist(),
        action_std=ds.action_std.tolist(),
        meta=ds.meta,
        binary=path.with_suffix(".bin").name,
    )
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True)
    with open(path.with_suffix(".bin"), "wb") as fh:
        for arr in (ds.hist_states, ds.hist_actions, ds.future_states, ds.future_actions):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_dataset(path: str | Path) -> WindowDataset:
    path = Path(path)
    with open(path) as fh:
        m = json.load(fh)
    n, N, H = m["n_windows"], m["history"], m["horizon"]
    ds_dim, da = m["state_dim"], m["action_dim"]
    shapes = [(n, N + 1, ds_dim), (n, N, da), (n, H, ds_dim), (n, H, da)]
    blob = np.fromfile(path.parent / m["binary"], dtype="<f4")
    arrays = []
    off = 0
    for shp in shapes:
        size = int(np.prod(shp))
        arrays.append(blob[off : off + size].reshape(shp).copy())
        off += size
    if off != blob.size:
        raise ValueError("dataset binary size mismatch")
    return WindowDataset(
        kind=m["kind"],
        history=N,
        horizon=H,
        state_dim=ds_dim,
        action_dim=da,
        hist_states=arrays[0],
        hist_actions=arrays[1],
        future_states=arrays[2],
        future_actions=arrays[3],
        state_mean=np.asarray(m["state_mean"]),
        state_std=np.asarray(m["state_std"]),
        action_mean=np.asarray(m["action_mean"]),
        action_std=np.asarray(m["action_std"]),
        meta=m.get("meta", {}),
    )


def dataset_hash(ds: WindowDataset) -> str:
    h = hashlib.sha256()
    for arr in (ds.hist_states, ds.hist_actions, ds.future_states, ds.future_actions):
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()[:16]
