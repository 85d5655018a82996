import numpy as np
import pytest

from gaitforge.geom import (
    GimbalSingular,
    Pose,
    compose,
    footprint,
    inverse,
    matrix_to_quat,
    quat_slerp,
    quat_to_matrix,
    rot6d,
    rot6d_to_matrix,
    rot_x,
    rot_y,
    rot_z,
    so3_exp,
    so3_log,
    yaw,
)


def random_rotation(rng):
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))


def rodrigues_reference(axis, angle):
    # independent of geom.so3_exp: explicit component formula
    x, y, z = axis
    c, s, C = np.cos(angle), np.sin(angle), 1.0 - np.cos(angle)
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def zyx_yaw_bruteforce(R):
    # Find psi so that Rz(-psi) @ R has the Ry(theta)Rx(phi) shape, whose
    # [1, 0] entry is exactly zero. Grid scan + bisection; no arctan shortcut.
    def f(psi):
        return (rot_z(-psi) @ R)[1, 0]

    grid = np.linspace(-np.pi, np.pi, 20001)
    vals = np.array([f(p) for p in grid])
    best = None
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            candidates = [grid[i]]
        elif vals[i] * vals[i + 1] < 0:
            lo, hi = grid[i], grid[i + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if f(lo) * f(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            candidates = [0.5 * (lo + hi)]
        else:
            continue
        for psi in candidates:
            M = rot_z(-psi) @ R
            # proper branch: cos(theta) > 0 on the [0,0] entry
            if M[0, 0] > 0:
                best = psi
    assert best is not None
    return best


class TestYaw:
    def test_identity(self):
        assert yaw(np.eye(3)) == 0.0

    def test_pure_yaw(self):
        assert yaw(rot_z(np.pi / 2)) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_zyx_composition(self):
        R = rot_z(0.3) @ rot_y(0.2) @ rot_x(0.1)
        assert zyx_yaw_bruteforce(R) == pytest.approx(0.3, abs=1e-9)
        assert yaw(R) == pytest.approx(0.3, abs=1e-12)

    def test_random_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            R = random_rotation(rng)
            if abs(R[2, 0]) > 0.99:
                continue
            assert yaw(R) == pytest.approx(zyx_yaw_bruteforce(R), abs=1e-8)

    def test_gimbal_singular(self):
        with pytest.raises(GimbalSingular):
            yaw(rot_y(np.pi / 2))


class TestFootprint:
    def test_identity(self):
        fp = footprint(Pose.identity())
        np.testing.assert_allclose(fp.p, [0, 0, 0])
        np.testing.assert_allclose(fp.R, np.eye(3))

    def test_definition(self):
        fp = footprint(Pose(np.array([1.0, 2.0, 3.0]), rot_z(0.5)))
        np.testing.assert_allclose(fp.p, [1, 2, 0], atol=1e-15)
        np.testing.assert_allclose(fp.R, rot_z(0.5), atol=1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            R = random_rotation(rng)
            if abs(R[2, 0]) > 0.99:
                continue
            T = Pose(rng.normal(size=3), R)
            once = footprint(T)
            twice = footprint(once)
            np.testing.assert_allclose(twice.p, once.p, atol=1e-12)
            np.testing.assert_allclose(twice.R, once.R, atol=1e-12)

    def test_commutes_with_planar_translation(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            R = random_rotation(rng)
            if abs(R[2, 0]) > 0.99:
                continue
            T = Pose(rng.normal(size=3), R)
            d = np.array([rng.normal(), rng.normal(), 0.0])
            a = footprint(Pose(T.p + d, T.R))
            b = footprint(T)
            np.testing.assert_allclose(a.p, b.p + d, atol=1e-12)
            np.testing.assert_allclose(a.R, b.R, atol=1e-12)


class TestSo3Log:
    def test_identity(self):
        np.testing.assert_allclose(so3_log(np.eye(3)), np.zeros(3))

    def test_pure_axis(self):
        np.testing.assert_allclose(so3_log(rot_z(0.7)), [0, 0, 0.7], atol=1e-12)

    def test_round_trip_random(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            R = random_rotation(rng)
            phi = so3_log(R)
            assert np.linalg.norm(phi) <= np.pi + 1e-12
            np.testing.assert_allclose(so3_exp(phi), R, atol=1e-9)

    def test_round_trip_near_pi(self):
        rng = np.random.default_rng(17)
        for gap in (1e-4, 0.0):
            for _ in range(200):
                axis = rng.normal(size=3)
                axis /= np.linalg.norm(axis)
                R = rodrigues_reference(axis, np.pi - gap)
                np.testing.assert_allclose(so3_exp(so3_log(R)), R, atol=1e-9)

    def test_pi_sign_deterministic(self):
        axis = np.array([0.0, -1.0, 0.0])
        R = rodrigues_reference(axis, np.pi)
        phi = so3_log(R)
        first_nonzero = phi[np.nonzero(np.abs(phi) > 1e-9)[0][0]]
        assert first_nonzero > 0

    def test_exp_matches_reference(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0, np.pi)
            np.testing.assert_allclose(
                so3_exp(axis * angle), rodrigues_reference(axis, angle), atol=1e-12
            )


class TestRot6d:
    def test_identity(self):
        np.testing.assert_allclose(rot6d(np.eye(3)), [1, 0, 0, 0, 1, 0])

    def test_quarter_turn(self):
        np.testing.assert_allclose(
            rot6d(rot_z(np.pi / 2)), [0, 1, 0, -1, 0, 0], atol=1e-15
        )

    def test_gram_schmidt_reconstruction(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            R = random_rotation(rng)
            np.testing.assert_allclose(rot6d_to_matrix(rot6d(R)), R, atol=1e-9)


class TestPoseAlgebra:
    def test_compose_associative(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            A, B, C = (
                Pose(rng.normal(size=3), random_rotation(rng)) for _ in range(3)
            )
            left = compose(compose(A, B), C)
            right = compose(A, compose(B, C))
            np.testing.assert_allclose(left.p, right.p, atol=1e-10)
            np.testing.assert_allclose(left.R, right.R, atol=1e-10)

    def test_inverse_identity(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            T = Pose(rng.normal(size=3), random_rotation(rng))
            I = compose(T, inverse(T))
            np.testing.assert_allclose(I.p, np.zeros(3), atol=1e-12)
            np.testing.assert_allclose(I.R, np.eye(3), atol=1e-12)

    def test_long_chain_stays_orthonormal(self):
        rng = np.random.default_rng(37)
        T = Pose.identity()
        for _ in range(1000):
            T = compose(T, Pose(rng.normal(size=3) * 0.01, random_rotation(rng)))
        err = np.linalg.norm(T.R @ T.R.T - np.eye(3))
        assert err < 1e-9


class TestQuaternions:
    def test_matrix_round_trip(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            R = random_rotation(rng)
            np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(R)), R, atol=1e-12)

    def test_slerp_coaxial_midpoint(self):
        q0 = matrix_to_quat(rot_z(0.0))
        q1 = matrix_to_quat(rot_z(0.2))
        qm = quat_slerp(q0, q1, 0.5)
        np.testing.assert_allclose(quat_to_matrix(qm), rot_z(0.1), atol=1e-9)

    def test_slerp_endpoints(self):
        rng = np.random.default_rng(43)
        q0 = matrix_to_quat(random_rotation(rng))
        q1 = matrix_to_quat(random_rotation(rng))
        np.testing.assert_allclose(quat_slerp(q0, q1, 0.0), q0, atol=1e-12)
        # u=1 may land on -q1; compare as rotations
        np.testing.assert_allclose(
            quat_to_matrix(quat_slerp(q0, q1, 1.0)), quat_to_matrix(q1), atol=1e-12
        )
