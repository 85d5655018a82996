import numpy as np
import pytest

from gaitforge.config import WalkerConfig
from gaitforge.sim import walker as W
from gaitforge.sim.walker import (
    WalkerState,
    make_params,
    mass_matrix,
    step_walker,
    walker_energy,
)


def standing_state(z=0.5):
    return WalkerState(np.array([0.0, z, 0.0, 0.0, 0.0, 0.0, 0.0]), np.zeros(7))


def zero_gains():
    return np.zeros(4), np.zeros(4)


@pytest.fixture(scope="module")
def params():
    return make_params(WalkerConfig())


class TestFreeFall:
    def test_ballistic_base(self, params):
        # no ground: internal joints feel no relative force under uniform gravity
        st = standing_state(z=5.0)
        g = params.cfg.gravity
        dt = params.cfg.dt
        z0 = st.q[1]
        n = int(0.2 / (dt * 10))
        for i in range(n):
            st = step_walker(st, np.zeros(4), params, zero_gains(), contact_enabled=False)
        t = n * 10 * dt
        # semi-implicit Euler lands within dt*g*t of the parabola
        assert abs(st.q[1] - (z0 - 0.5 * g * t * t)) < 1e-4 + g * dt * t
        np.testing.assert_allclose(st.q[3:], 0.0, atol=1e-10)

    def test_energy_non_increasing_without_contact(self, params):
        rng = np.random.default_rng(0)
        st = WalkerState(
            np.array([0.0, 3.0, 0.2, -0.4, 0.7, 0.3, 0.2]),
            rng.normal(size=7) * 0.5,
        )
        e0 = walker_energy(st, params)
        emax = e0
        for i in range(500):  # 1 s
            st = step_walker(st, np.zeros(4), params, zero_gains(), substeps=1, contact_enabled=False)
            e = walker_energy(st, params)
            emax = max(emax, e)
        assert emax - e0 < 1e-3 * max(1.0, abs(e0))


class TestGroundContact:
    def nominal(self, params):
        return np.asarray(params.cfg.nominal_pose, dtype=np.float64)

    def crouch_state(self, params, z=0.50):
        return WalkerState(np.array([0.0, z, 0.0, *params.cfg.nominal_pose]), np.zeros(7))

    def test_settles_to_static_equilibrium(self, params):
        # zero action: the impedance servo holds the nominal crouch
        st = self.crouch_state(params)
        gains = (np.full(4, 40.0), np.full(4, 2.5))
        for _ in range(int(3.0 * 50)):
            st = step_walker(st, self.nominal(params), params, gains)
        z_settled = st.q[1]
        assert abs(st.v[1]) < 1e-4
        for _ in range(1000):
            st = step_walker(st, self.nominal(params), params, gains, substeps=1)
        assert abs(st.q[1] - z_settled) < 1e-3

    def test_normal_force_non_negative_and_cone(self, params):
        st = self.crouch_state(params)
        gains = (np.full(4, 40.0), np.full(4, 2.5))
        forces = np.zeros(8)
        for i in range(200):
            st = step_walker(
                st, self.nominal(params) + np.array([0.1, 0.2, -0.1, 0.1]), params, gains, forces_out=forces
            )
            ft = forces[0::2]
            fn = forces[1::2]
            assert np.all(fn >= 0.0)
            assert np.all(np.abs(ft) <= params.cfg.friction * fn + 1e-9)

    def test_supports_weight(self, params):
        st = self.crouch_state(params)
        gains = (np.full(4, 40.0), np.full(4, 2.5))
        forces = np.zeros(8)
        for _ in range(int(2.0 * 50)):
            st = step_walker(st, self.nominal(params), params, gains, forces_out=forces)
        total_normal = forces[1::2].sum()
        assert total_normal == pytest.approx(params.total_mass * params.cfg.gravity, rel=0.05)


class TestDeterminismAndPaths:
    def test_bit_determinism(self, params):
        def run():
            st = WalkerState(
                np.array([0.0, 0.51, 0.05, -0.2, 0.4, 0.1, 0.1]), np.zeros(7)
            )
            gains = (np.full(4, 40.0), np.full(4, 2.5))
            for i in range(100):
                st = step_walker(st, np.array([0.1, 0.3, -0.1, 0.2]), params, gains)
            return st

        a, b = run(), run()
        assert np.array_equal(a.q, b.q) and np.array_equal(a.v, b.v)

    def test_numba_and_numpy_paths_agree(self, params):
        if not W.NUMBA_ENABLED:
            pytest.skip("numba disabled in this environment")
        st0 = WalkerState(np.array([0.0, 0.51, 0.03, -0.3, 0.5, 0.2, 0.1]), np.zeros(7))
        gains = (np.full(4, 40.0), np.full(4, 2.5))

        def run(kernel):
            st = st0.copy()
            forces = np.zeros(8)
            for i in range(50):
                ok = kernel(
                    st.q, st.v, st.anchors, st.in_contact,
                    np.array([0.0, 0.2, 0.0, 0.2]), gains[0], gains[1],
                    np.full(4, params.cfg.torque_limit), params.packed,
                    params.cfg.friction, 0.0, 0.0, 10, 1, forces,
                )
                assert ok
            return st

        a = run(W._substeps_numba)
        b = run(W._substeps_numpy)
        np.testing.assert_allclose(a.q, b.q, atol=1e-10)
        np.testing.assert_allclose(a.v, b.v, atol=1e-10)

    def test_divergence_detected(self, params):
        st = standing_state()
        st.v[0] = np.inf
        with pytest.raises(W.NumericalDivergence):
            step_walker(st, np.zeros(4), params, zero_gains())


class TestModelConsistency:
    def test_mass_matrix_spd(self, params):
        rng = np.random.default_rng(2)
        for _ in range(10):
            st = WalkerState(rng.normal(size=7), np.zeros(7))
            M = mass_matrix(st, params)
            np.testing.assert_allclose(M, M.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(M) > 0)

    def test_container_round_trip(self, params):
        rng = np.random.default_rng(3)
        st = WalkerState(rng.normal(size=7) * 0.3, rng.normal(size=7))
        q, v = W.state_to_container(st)
        back = W.container_to_state(q, v)
        np.testing.assert_allclose(back.q, st.q, atol=1e-12)
        np.testing.assert_allclose(back.v, st.v, atol=1e-12)

    def test_fk_matches_dynamics_com_chain(self, params):
        # kinematic tree ankle point equals the dynamics chain's ankle
        from gaitforge.kinematics import forward_kinematics
        from gaitforge.sim.walker import build_walker_model, link_angles, state_to_container, _rot2

        model = build_walker_model(params.cfg)
        rng = np.random.default_rng(4)
        st = WalkerState(rng.normal(size=7) * 0.4, np.zeros(7))
        q, v = state_to_container(st)
        kin = forward_kinematics(model, q, v)
        g = link_angles(st.q)
        ankle_l = (
            st.q[:2]
            + _rot2(g[1], 0.0, -params.cfg.len_thigh)
            + _rot2(g[2], 0.0, -params.cfg.len_shank)
        )
        shank_l = kin.p[model.body_index("shank_l")]
        np.testing.assert_allclose([shank_l[0], shank_l[2]], ankle_l, atol=1e-10)
