"""Planar sagittal walker: five dynamic links (trunk composite, two thighs,
two shank+foot composites), seven generalized coordinates
``[x, z, pitch, hipL, kneeL, hipR, kneeR]``, penalty ground contact at the
heel and toe of each foot with anchor-spring friction.

All sagittal angles rotate about +y; ``Rot2`` below is rot_y restricted to
the (x, z) plane. Legs hang straight down at zero angles; positive hip
swings the leg backward, positive knee bends it backward (human-like).

Integration is semi-implicit Euler at 500 Hz with the joint impedance servo
evaluated every substep against a setpoint held across the control step.
The hot kernel has a numba build and a numpy twin (see _accel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._accel import NUMBA_ENABLED, njit
from ..config import WalkerConfig
from ..geom import rot_y
from ..kinematics import RobotModel

NQ = 7
NJ = 4
N_LINKS = 5
N_CONTACTS = 4  # heelL, toeL, heelR, toeR


class NumericalDivergence(RuntimeError):
    pass


@dataclass
class WalkerState:
    q: np.ndarray  # (7,)
    v: np.ndarray  # (7,)
    anchors: np.ndarray = field(default_factory=lambda: np.zeros(N_CONTACTS))
    in_contact: np.ndarray = field(default_factory=lambda: np.zeros(N_CONTACTS, dtype=np.int64))

    def copy(self) -> "WalkerState":
        return WalkerState(self.q.copy(), self.v.copy(), self.anchors.copy(), self.in_contact.copy())


@dataclass(frozen=True)
class WalkerParams:
    """Dynamics constants derived from WalkerConfig; packed for the kernel."""

    cfg: WalkerConfig
    masses: np.ndarray  # (5,)
    inertias: np.ndarray  # (5,) about each link CoM
    com_local: np.ndarray  # (5, 2) CoM in link frame (x, z)
    armature: np.ndarray  # (4,) reflected rotor inertia
    packed: np.ndarray  # flat float64 array consumed by the kernels

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


def _composite(parts):
    """Point-mass composite: parts = [(m, (x, z), I_own)] -> (m, com, I)."""
    m = sum(p[0] for p in parts)
    com = np.array([sum(p[0] * p[1][0] for p in parts) / m, sum(p[0] * p[1][1] for p in parts) / m])
    inertia = 0.0
    for pm, (px, pz), own in parts:
        inertia += own + pm * ((px - com[0]) ** 2 + (pz - com[1]) ** 2)
    return m, com, inertia


def make_params(cfg: WalkerConfig | None = None) -> WalkerParams:
    cfg = cfg or WalkerConfig()
    lt, ls = cfg.len_thigh, cfg.len_shank
    rod = lambda m, L: m * L * L / 12.0
    # trunk composite: pelvis at origin, torso and head stacked above
    m0, com0, i0 = _composite(
        [
            (cfg.mass_pelvis, (0.0, 0.0), 0.02),
            (cfg.mass_torso, (0.0, cfg.torso_offset), 0.03),
            (cfg.mass_head, (0.0, cfg.head_offset), 0.005),
        ]
    )
    # thigh: rod hip->knee
    m1, com1, i1 = cfg.mass_thigh, np.array([0.0, -lt / 2]), rod(cfg.mass_thigh, lt)
    # shank+foot composite: rod knee->ankle plus the foot plate, which is
    # welded through a wedge so it lies flat at the nominal stance angle
    d = (cfg.toe - cfg.heel) / 2.0
    m = cfg.foot_mount
    plate_center = (d * np.cos(m), -ls + d * np.sin(m))
    plate_len = cfg.toe + cfg.heel
    m2, com2, i2 = _composite(
        [
            (cfg.mass_shank, (0.0, -ls / 2), rod(cfg.mass_shank, ls)),
            (cfg.mass_foot, plate_center, rod(cfg.mass_foot, plate_len)),
        ]
    )
    masses = np.array([m0, m1, m2, m1, m2])
    inertias = np.array([i0, i1, i2, i1, i2])
    com_local = np.array([com0, com1, com2, com1, com2])
    armature = np.full(NJ, cfg.gear_ratio**2 * cfg.motor_inertia)
    packed = np.array(
        [
            m0, m1, m2,
            i0, i1, i2,
            com0[0], com0[1], com1[0], com1[1], com2[0], com2[1],
            lt, ls, cfg.heel, cfg.toe,
            cfg.gravity, cfg.dt,
            cfg.contact_kn, cfg.contact_dn, cfg.contact_kt, cfg.contact_dt,
            armature[0],
            cfg.foot_mount,
        ]
    )
    return WalkerParams(cfg, masses, inertias, com_local, armature, packed)


# ---------------------------------------------------------------------------
# Dynamics kernel. The numba and numpy twins share this exact math:
#   link angles   g = [pitch, pitch+hL, pitch+hL+kL, pitch+hR, pitch+hR+kR]
#   Rot2(g)(a,c)  = (a cos g + c sin g, -a sin g + c cos g)      (rot_y in x-z)
#   d/dg Rot2     = (-a sin g + c cos g, -a cos g - c sin g)
#   d2/dg2 Rot2   = -Rot2
# Composite CoM positions, 2x7 Jacobians, mass matrix by virtual work,
# penalty contacts at heel/toe, semi-implicit Euler.
# ---------------------------------------------------------------------------

_ANGLE_ROWS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0, 1.0],
    ]
)


def _kernel_source(nb: bool):
    """Single source of truth for both kernel builds."""

    def walker_substeps(q, v, anchors, in_contact, q_des, kp, kd, tau_max, P, mu, com_dx, com_dz, n_sub, contact_enabled, forces_out):
        m0, m1, m2 = P[0], P[1], P[2]
        i0, i1, i2 = P[3], P[4], P[5]
        c0x, c0z = P[6] + com_dx, P[7] + com_dz
        c1x, c1z = P[8], P[9]
        c2x, c2z = P[10], P[11]
        lt, ls, heel, toe = P[12], P[13], P[14], P[15]
        g_acc, dt = P[16], P[17]
        kn, dn, kt, dtan = P[18], P[19], P[20], P[21]
        arm_in = P[22]
        mount = P[23]

        masses = np.array([m0, m1, m2, m1, m2])
        inertias = np.array([i0, i1, i2, i1, i2])
        coms = np.array([[c0x, c0z], [c1x, c1z], [c2x, c2z], [c1x, c1z], [c2x, c2z]])
        Wrows = np.array(
            [
                [1.0, 0.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 1.0, 0.0, 0.0],
                [1.0, 0.0, 0.0, 1.0, 0.0],
                [1.0, 0.0, 0.0, 1.0, 1.0],
            ]
        )
        # chain segments feeding each link CoM: (angle index, local x, local z)
        # link 0: com0 about g0; link1: com1 about g1; link2: knee arm about g1
        # then com2 about g2; links 3/4 mirror with g3/g4.
        for step in range(n_sub):
            for col in range(7):
                if not (np.isfinite(q[col]) and np.isfinite(v[col])):
                    return 0
            pitch = q[2]
            g = np.empty(5)
            g[0] = pitch
            g[1] = pitch + q[3]
            g[2] = pitch + q[3] + q[4]
            g[3] = pitch + q[5]
            g[4] = pitch + q[5] + q[6]
            cg = np.cos(g)
            sg = np.sin(g)
            gdot = np.empty(5)
            gdot[0] = v[2]
            gdot[1] = v[2] + v[3]
            gdot[2] = v[2] + v[3] + v[4]
            gdot[3] = v[2] + v[5]
            gdot[4] = v[2] + v[5] + v[6]

            # per-link CoM positions, Jacobians (2x7), centripetal bias (2,)
            J = np.zeros((5, 2, 7))
            cpos = np.zeros((5, 2))
            abias = np.zeros((5, 2))
            for li in range(5):
                J[li, 0, 0] = 1.0
                J[li, 1, 1] = 1.0
            # segments: (link, angle, ax, az) rotated into world and chained
            nseg = np.array([1, 1, 2, 1, 2])
            seg_angle = np.array([[0, 0], [1, 0], [1, 2], [3, 0], [3, 4]])
            seg_ax = np.array([[c0x, 0.0], [c1x, 0.0], [0.0, c2x], [c1x, 0.0], [0.0, c2x]])
            seg_az = np.array([[c0z, 0.0], [c1z, 0.0], [-lt, c2z], [c1z, 0.0], [-lt, c2z]])
            for li in range(5):
                px = q[0]
                pz = q[1]
                bx = 0.0
                bz = 0.0
                for si in range(nseg[li]):
                    ai = seg_angle[li, si]
                    a = seg_ax[li, si]
                    c = seg_az[li, si]
                    rx = a * cg[ai] + c * sg[ai]
                    rz = -a * sg[ai] + c * cg[ai]
                    px += rx
                    pz += rz
                    # dRot2/dg . seg
                    dx = -a * sg[ai] + c * cg[ai]
                    dz = -a * cg[ai] - c * sg[ai]
                    for col in range(5):
                        wv = Wrows[ai, col]
                        if wv != 0.0:
                            J[li, 0, 2 + col] += dx * wv
                            J[li, 1, 2 + col] += dz * wv
                    bx += -rx * gdot[ai] * gdot[ai]
                    bz += -rz * gdot[ai] * gdot[ai]
                cpos[li, 0] = px
                cpos[li, 1] = pz
                abias[li, 0] = bx
                abias[li, 1] = bz

            # mass matrix and generalized force
            M = np.zeros((7, 7))
            Q = np.zeros(7)
            for li in range(5):
                m = masses[li]
                for r in range(7):
                    jx = J[li, 0, r]
                    jz = J[li, 1, r]
                    if jx == 0.0 and jz == 0.0:
                        continue
                    for cc in range(r, 7):
                        M[r, cc] += m * (jx * J[li, 0, cc] + jz * J[li, 1, cc])
                    Q[r] += -m * (jx * abias[li, 0] + jz * abias[li, 1]) - jz * m * g_acc
                inr = inertias[li]
                for r in range(5):
                    wr = Wrows[li, r]
                    if wr == 0.0:
                        continue
                    for cc in range(r, 5):
                        M[2 + r, 2 + cc] += inr * wr * Wrows[li, cc]
            for jj in range(4):
                M[3 + jj, 3 + jj] += arm_in
            for r in range(7):
                for cc in range(r):
                    M[r, cc] = M[cc, r]

            # joint impedance servo (runs at physics rate, setpoint held)
            for jj in range(4):
                tau = kp[jj] * (q_des[jj] - q[3 + jj]) - kd[jj] * v[3 + jj]
                if tau > tau_max[jj]:
                    tau = tau_max[jj]
                elif tau < -tau_max[jj]:
                    tau = -tau_max[jj]
                Q[3 + jj] += tau

            # contacts: heel/toe of each foot
            if contact_enabled != 0:
                for ci in range(4):
                    leg = ci // 2  # 0 left, 1 right
                    along = -heel if ci % 2 == 0 else toe
                    a1 = 1 if leg == 0 else 3
                    a2 = 2 if leg == 0 else 4
                    # point = base + Rot2(g_thigh)(0,-lt) + Rot2(g_shank)(0,-ls)
                    #       + Rot2(g_shank - mount)(along, 0): the plate is
                    # welded through a wedge, flat at shank angle == mount
                    cgm = np.cos(g[a2] - mount)
                    sgm = np.sin(g[a2] - mount)
                    px = q[0] + (-lt) * sg[a1] + (-ls) * sg[a2] + along * cgm
                    pz = q[1] + (-lt) * cg[a1] + (-ls) * cg[a2] - along * sgm
                    if pz >= 0.0:
                        in_contact[ci] = 0
                        anchors[ci] = px
                        forces_out[2 * ci] = 0.0
                        forces_out[2 * ci + 1] = 0.0
                        continue
                    # point jacobian (2x7)
                    Jp = np.zeros((2, 7))
                    Jp[0, 0] = 1.0
                    Jp[1, 1] = 1.0
                    dx1 = (-lt) * cg[a1]
                    dz1 = lt * sg[a1]
                    dx2 = (-ls) * cg[a2] - along * sgm
                    dz2 = ls * sg[a2] - along * cgm
                    for col in range(5):
                        w1 = Wrows[a1, col]
                        w2 = Wrows[a2, col]
                        Jp[0, 2 + col] = dx1 * w1 + dx2 * w2
                        Jp[1, 2 + col] = dz1 * w1 + dz2 * w2
                    vx = 0.0
                    vz = 0.0
                    for col in range(7):
                        vx += Jp[0, col] * v[col]
                        vz += Jp[1, col] * v[col]
                    fn = -kn * pz - dn * vz
                    if fn < 0.0:
                        fn = 0.0
                    if in_contact[ci] == 0:
                        anchors[ci] = px
                        in_contact[ci] = 1
                    ft = -kt * (px - anchors[ci]) - dtan * vx
                    lim = mu * fn
                    if ft > lim:
                        ft = lim
                        anchors[ci] = px + (ft + dtan * vx) / kt
                    elif ft < -lim:
                        ft = -lim
                        anchors[ci] = px + (ft + dtan * vx) / kt
                    forces_out[2 * ci] = ft
                    forces_out[2 * ci + 1] = fn
                    for col in range(7):
                        Q[col] += Jp[0, col] * ft + Jp[1, col] * fn

            acc = np.linalg.solve(M, Q)
            for col in range(7):
                v[col] += dt * acc[col]
                q[col] += dt * v[col]

        for col in range(7):
            if not (np.isfinite(q[col]) and np.isfinite(v[col])):
                return 0
        return 1

    if nb:
        return njit(cache=True, fastmath=False)(walker_substeps)
    return walker_substeps


_substeps_numpy = _kernel_source(nb=False)
_substeps_numba = _kernel_source(nb=True) if NUMBA_ENABLED else _substeps_numpy


def step_walker(
    state: WalkerState,
    q_des: np.ndarray,
    params: WalkerParams,
    gains: tuple,
    substeps: int | None = None,
    mu: float | None = None,
    com_offset: tuple = (0.0, 0.0),
    contact_enabled: bool = True,
    forces_out: np.ndarray | None = None,
) -> WalkerState:
    """Advance one control step (default cfg.substeps physics substeps).

    ``q_des`` is the held joint setpoint; ``gains = (kp, kd)`` per joint.
    Raises NumericalDivergence on non-finite state.
    """
    cfg = params.cfg
    n_sub = cfg.substeps if substeps is None else substeps
    kp, kd = gains
    out = state.copy()
    if forces_out is None:
        forces_out = np.zeros(2 * N_CONTACTS)
    fn = _substeps_numba if NUMBA_ENABLED else _substeps_numpy
    ok = fn(
        out.q,
        out.v,
        out.anchors,
        out.in_contact,
        np.asarray(q_des, dtype=np.float64),
        np.asarray(kp, dtype=np.float64),
        np.asarray(kd, dtype=np.float64),
        np.full(NJ, cfg.torque_limit, dtype=np.float64),
        params.packed,
        cfg.friction if mu is None else mu,
        com_offset[0],
        com_offset[1],
        n_sub,
        1 if contact_enabled else 0,
        forces_out,
    )
    if not ok:
        raise NumericalDivergence("walker state became non-finite")
    return out


def link_angles(q: np.ndarray) -> np.ndarray:
    return _ANGLE_ROWS @ np.array([q[2], q[3], q[4], q[5], q[6]])


def _rot2(g: float, a: float, c: float) -> np.ndarray:
    return np.array([a * np.cos(g) + c * np.sin(g), -a * np.sin(g) + c * np.cos(g)])


def link_com_positions(state: WalkerState, params: WalkerParams, com_offset=(0.0, 0.0)) -> np.ndarray:
    """CoM of the five dynamic links, for energy audits and tests."""
    q = state.q
    g = link_angles(q)
    base = q[:2]
    cl = params.com_local.copy()
    cl[0] += np.asarray(com_offset)
    lt = params.cfg.len_thigh
    out = np.zeros((N_LINKS, 2))
    out[0] = base + _rot2(g[0], cl[0, 0], cl[0, 1])
    out[1] = base + _rot2(g[1], cl[1, 0], cl[1, 1])
    out[2] = base + _rot2(g[1], 0.0, -lt) + _rot2(g[2], cl[2, 0], cl[2, 1])
    out[3] = base + _rot2(g[3], cl[3, 0], cl[3, 1])
    out[4] = base + _rot2(g[3], 0.0, -lt) + _rot2(g[4], cl[4, 0], cl[4, 1])
    return out


def mass_matrix(state: WalkerState, params: WalkerParams, com_offset=(0.0, 0.0)) -> np.ndarray:
    """Dense M(q) built from the same Jacobians as the kernel."""
    q = state.q
    g = link_angles(q)
    cg, sg = np.cos(g), np.sin(g)
    cl = params.com_local.copy()
    cl[0] += np.asarray(com_offset)
    lt = params.cfg.len_thigh
    segs = [
        [(0, cl[0, 0], cl[0, 1])],
        [(1, cl[1, 0], cl[1, 1])],
        [(1, 0.0, -lt), (2, cl[2, 0], cl[2, 1])],
        [(3, cl[3, 0], cl[3, 1])],
        [(3, 0.0, -lt), (4, cl[4, 0], cl[4, 1])],
    ]
    M = np.zeros((NQ, NQ))
    for li in range(N_LINKS):
        J = np.zeros((2, NQ))
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        for ai, a, c in segs[li]:
            dx = -a * sg[ai] + c * cg[ai]
            dz = -a * cg[ai] - c * sg[ai]
            J[0, 2:] += dx * _ANGLE_ROWS[ai]
            J[1, 2:] += dz * _ANGLE_ROWS[ai]
        M += params.masses[li] * J.T @ J
        Wfull = np.zeros(NQ)
        Wfull[2:] = _ANGLE_ROWS[li]
        M += params.inertias[li] * np.outer(Wfull, Wfull)
    M[3:, 3:] += np.diag(params.armature)
    return M


def walker_energy(state: WalkerState, params: WalkerParams, com_offset=(0.0, 0.0)) -> float:
    """Kinetic + gravitational potential energy (contact springs excluded)."""
    M = mass_matrix(state, params, com_offset)
    ke = 0.5 * state.v @ M @ state.v
    pe = params.cfg.gravity * float(
        params.masses @ link_com_positions(state, params, com_offset)[:, 1]
    )
    return float(ke + pe)


# --------------------------------------------------------------------------
# Kinematic tree model (for FK, observations, encodings)
# --------------------------------------------------------------------------

BODY_NAMES = ["pelvis", "torso", "head", "thigh_l", "shank_l", "foot_l", "thigh_r", "shank_r", "foot_r"]
JOINT_NAMES = ["hip_l", "knee_l", "hip_r", "knee_r"]


def build_walker_model(cfg: WalkerConfig | None = None) -> RobotModel:
    cfg = cfg or WalkerConfig()
    axis = np.array([0.0, 1.0, 0.0])
    d = (cfg.toe - cfg.heel) / 2.0
    mnt = cfg.foot_mount
    foot_off = [d * np.cos(mnt), 0.0, d * np.sin(mnt)]  # plate center, shank frame
    off_p = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, cfg.torso_offset],
            [0.0, 0.0, cfg.head_offset - cfg.torso_offset],
            [0.0, 0.0, -cfg.len_thigh],  # thigh frame at the knee
            [0.0, 0.0, -cfg.len_shank],  # shank frame at the ankle
            foot_off,
            [0.0, 0.0, -cfg.len_thigh],
            [0.0, 0.0, -cfg.len_shank],
            foot_off,
        ]
    )
    off_R = np.tile(np.eye(3), (len(BODY_NAMES), 1, 1))
    off_R[5] = rot_y(-mnt)
    off_R[8] = rot_y(-mnt)
    parent = np.array([-1, 0, 1, 0, 3, 4, 0, 6, 7])
    joint_of_body = np.array([-1, -1, -1, 0, 1, -1, 2, 3, -1])
    J = NJ
    return RobotModel(
        body_names=list(BODY_NAMES),
        parent=parent,
        offset_p=off_p,
        offset_R=off_R,
        joint_of_body=joint_of_body,
        joint_names=list(JOINT_NAMES),
        joint_axis=np.tile(axis, (J, 1)),
        gear_ratio=np.full(J, cfg.gear_ratio),
        motor_inertia=np.full(J, cfg.motor_inertia),
        torque_limit=np.full(J, cfg.torque_limit),
        q_lower=np.array([cfg.hip_limits[0], cfg.knee_limits[0], cfg.hip_limits[0], cfg.knee_limits[0]]),
        q_upper=np.array([cfg.hip_limits[1], cfg.knee_limits[1], cfg.hip_limits[1], cfg.knee_limits[1]]),
        q_nominal=np.asarray(cfg.nominal_pose, dtype=np.float64),
        anchor_body=0,
        target_bodies=(0, 1, 2, 5, 8),
        ee_bodies=(5, 8),
    )


def state_to_container(state: WalkerState) -> tuple[np.ndarray, np.ndarray]:
    """Planar state -> full (q, v) container (y, roll, yaw frozen at zero)."""
    from ..geom import matrix_to_quat

    q = np.zeros(7 + NJ)
    v = np.zeros(6 + NJ)
    q[0] = state.q[0]
    q[2] = state.q[1]
    q[3:7] = matrix_to_quat(rot_y(state.q[2]))
    q[7:] = state.q[3:]
    v[0] = state.v[0]
    v[2] = state.v[1]
    v[4] = state.v[2]
    v[6:] = state.v[3:]
    return q, v


def container_to_state(q: np.ndarray, v: np.ndarray) -> WalkerState:
    R = np.asarray(q[3:7])
    from ..geom import quat_to_matrix

    Rm = quat_to_matrix(R)
    pitch = float(np.arctan2(Rm[0, 2], Rm[2, 2]))
    sq = np.array([q[0], q[2], pitch, *q[7:]])
    sv = np.array([v[0], v[2], v[4], *v[6:]])
    return WalkerState(sq, sv)


def self_contact_report(state: WalkerState, params: WalkerParams) -> np.ndarray:
    """Report-only proxy self-contact forces per body (shanks and feet):
    overlap springs between left/right shank midpoints and foot centers in
    the sagittal projection. Never fed back into the dynamics."""
    cfg = params.cfg
    g = link_angles(state.q)
    base = state.q[:2]
    lt, ls = cfg.len_thigh, cfg.len_shank
    knee_l = base + _rot2(g[1], 0.0, -lt)
    knee_r = base + _rot2(g[3], 0.0, -lt)
    mid_shank_l = knee_l + _rot2(g[2], 0.0, -ls / 2)
    mid_shank_r = knee_r + _rot2(g[4], 0.0, -ls / 2)
    foot_l = knee_l + _rot2(g[2], (cfg.toe - cfg.heel) / 2.0, -ls)
    foot_r = knee_r + _rot2(g[4], (cfg.toe - cfg.heel) / 2.0, -ls)
    report = np.zeros(len(BODY_NAMES))
    pairs = [(4, mid_shank_l, 7, mid_shank_r), (5, foot_l, 8, foot_r)]
    for ia, pa, ib, pb in pairs:
        d = float(np.linalg.norm(pa - pb))
        overlap = 2.0 * cfg.self_contact_radius - d
        if overlap > 0:
            f = cfg.self_contact_k * overlap
            report[ia] += f
            report[ib] += f
    return report
