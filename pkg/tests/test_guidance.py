import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitforge.dataset import BODY_POS, EncodingSpec
from gaitforge.guidance import (
    DenormWindow,
    EmptyScene,
    JoystickCost,
    Sdf,
    SdfCost,
    TurnCost,
    WaypointCost,
    WeightedSum,
    finite_difference_grad,
    relaxed_barrier,
    relaxed_barrier_grad,
)


class TestRelaxedBarrier:
    def test_log_branch_values(self):
        assert relaxed_barrier(1.0, 0.1) == 0.0
        assert relaxed_barrier(np.e, 0.1) == pytest.approx(-1.0, abs=1e-12)

    def test_branch_agreement_at_knot(self):
        for delta in (0.05, 0.1, 0.7):
            lo = relaxed_barrier(delta - 1e-12, delta)
            hi = relaxed_barrier(delta + 1e-12, delta)
            assert lo == pytest.approx(-np.log(delta), abs=1e-9)
            assert hi == pytest.approx(-np.log(delta), abs=1e-9)

    def test_quadratic_branch_value(self):
        # B(0, 0.1) = -ln(0.1) + ((0-0.2)/0.1)^2/2 - 1/2 = 2.302585 + 1.5
        assert relaxed_barrier(0.0, 0.1) == pytest.approx(3.802585, abs=1e-4)

    def test_derivative_continuity_at_knot(self):
        for delta in (0.05, 0.1, 0.5):
            left = relaxed_barrier_grad(delta - 1e-15, delta)
            right = relaxed_barrier_grad(delta + 1e-15, delta)
            assert left == pytest.approx(-1.0 / delta, abs=1e-9)
            assert right == pytest.approx(-1.0 / delta, abs=1e-9)

    @given(st.floats(-0.5, 3.0), st.floats(0.01, 0.8))
    @settings(max_examples=300, deadline=None)
    def test_monotone_decreasing(self, x, delta):
        h = 1e-5
        assert relaxed_barrier(x + h, delta) < relaxed_barrier(x, delta)

    @given(st.floats(-0.5, 3.0), st.floats(0.01, 0.8))
    @settings(max_examples=200, deadline=None)
    def test_grad_matches_fd(self, x, delta):
        h = 1e-7
        if abs(x - delta) < 1e-5:
            return
        fd = (relaxed_barrier(x + h, delta) - relaxed_barrier(x - h, delta)) / (2 * h)
        assert relaxed_barrier_grad(x, delta) == pytest.approx(fd, rel=1e-4, abs=1e-6)


class TestSdf:
    def circle_scene(self):
        return Sdf.from_primitives([{"kind": "circle", "center": [0.0, 0.0], "radius": 1.0}])

    def test_circle_outside(self):
        d, g = self.circle_scene().query(np.array([2.0, 0.0]))
        assert d == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(g, [1.0, 0.0], atol=1e-12)

    def test_circle_inside(self):
        d, g = self.circle_scene().query(np.array([0.5, 0.0]))
        assert d == pytest.approx(-0.5, abs=1e-12)
        np.testing.assert_allclose(g, [1.0, 0.0], atol=1e-12)

    def test_box_corner(self):
        sdf = Sdf.from_primitives([{"kind": "box", "center": [0.0, 0.0], "half_extents": [1.0, 1.0]}])
        d, g = sdf.query(np.array([2.0, 2.0]))
        assert d == pytest.approx(np.sqrt(2.0), abs=1e-12)
        np.testing.assert_allclose(g, [np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-12)

    def test_box_inside(self):
        sdf = Sdf.from_primitives([{"kind": "box", "center": [0.0, 0.0], "half_extents": [1.0, 2.0]}])
        d, g = sdf.query(np.array([0.3, 0.0]))
        assert d == pytest.approx(-0.7, abs=1e-12)
        np.testing.assert_allclose(g, [1.0, 0.0], atol=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        sdf = Sdf.from_primitives(
            [
                {"kind": "circle", "center": [-1.0, 0.0], "radius": 0.5},
                {"kind": "circle", "center": [1.0, 0.0], "radius": 0.5},
            ]
        )
        d, g = sdf.query(np.array([0.0, 0.0]))
        assert d == pytest.approx(0.5)
        np.testing.assert_allclose(g, [1.0, 0.0], atol=1e-12)  # away from primitive 0

    def test_lipschitz(self):
        rng = np.random.default_rng(0)
        sdf = Sdf.from_primitives(
            [
                {"kind": "circle", "center": [0.3, -0.2], "radius": 0.7},
                {"kind": "box", "center": [2.0, 1.0], "half_extents": [0.5, 1.2]},
            ]
        )
        for _ in range(500):
            p = rng.uniform(-4, 4, 2)
            u = rng.normal(size=2)
            u /= np.linalg.norm(u)
            eps = 1e-4
            d1, _ = sdf.query(p)
            d2, _ = sdf.query(p + eps * u)
            assert abs(d2 - d1) <= eps + 1e-9

    def test_gradient_unit_norm(self):
        rng = np.random.default_rng(1)
        sdf = Sdf.from_primitives(
            [
                {"kind": "circle", "center": [0.0, 0.0], "radius": 1.0},
                {"kind": "box", "center": [3.0, 0.0], "half_extents": [1.0, 1.0]},
            ]
        )
        for _ in range(300):
            p = rng.uniform(-5, 5, 2)
            _, g = sdf.query(p)
            assert np.linalg.norm(g) == pytest.approx(1.0, abs=1e-9)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(2)
        sdf = Sdf.from_primitives(
            [
                {"kind": "circle", "center": [0.5, 0.5], "radius": 0.9},
                {"kind": "box", "center": [-1.0, 2.0], "half_extents": [0.7, 0.4]},
            ]
        )
        pts = rng.uniform(-3, 3, (64, 2))
        d, g = sdf.query_batch(pts)
        for i, p in enumerate(pts):
            ds, gs = sdf.query(p)
            assert d[i] == pytest.approx(ds, abs=1e-12)
            np.testing.assert_allclose(g[i], gs, atol=1e-12)

    def test_empty_scene(self):
        with pytest.raises(EmptyScene):
            Sdf.from_primitives([])

    def test_round_trip_primitives(self):
        prims = [
            {"kind": "circle", "center": [1.0, 2.0], "radius": 0.5},
            {"kind": "box", "center": [0.0, -1.0], "half_extents": [0.3, 0.4]},
        ]
        back = Sdf.from_primitives(prims).to_primitives()
        assert back[0]["kind"] == "circle" and back[1]["kind"] == "box"


def random_window(rng, H=8, n_bodies=5, spread=1.0):
    spec = EncodingSpec(BODY_POS, n_bodies, 0)
    s = rng.standard_normal((H, spec.state_dim)) * spread
    return DenormWindow(s, spec, dt=0.02)


class TestJoystickCost:
    def test_zero_at_target(self):
        rng = np.random.default_rng(0)
        win = random_window(rng)
        win.future_states[:, 3:5] = [0.4, -0.2]
        assert JoystickCost(np.array([0.4, -0.2])).value(win) == pytest.approx(0.0, abs=1e-12)

    def test_single_step_value(self):
        rng = np.random.default_rng(1)
        win = random_window(rng, H=1)
        win.future_states[0, 3:5] = [1.0, 0.0]
        assert JoystickCost(np.zeros(2)).value(win) == pytest.approx(0.5, abs=1e-12)

    def test_gradient_fd(self):
        rng = np.random.default_rng(2)
        cost = JoystickCost(np.array([0.3, 0.1]))
        for _ in range(20):
            win = random_window(rng)
            g = cost.grad(win)
            fd = finite_difference_grad(cost, win)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


class TestTurnCost:
    def test_gradient_fd(self):
        rng = np.random.default_rng(3)
        cost = TurnCost(speed=0.4, yaw_rate=0.8)
        for _ in range(10):
            win = random_window(rng)
            g = cost.grad(win)
            fd = finite_difference_grad(cost, win)
            # yaw-rate terms carry 1/dt^2 magnitudes; scale the tolerance
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6 * (1 + np.abs(fd).max()))


class TestWaypointCost:
    def test_zero_at_goal_at_rest(self):
        rng = np.random.default_rng(4)
        win = random_window(rng)
        win.future_states[:, 0:2] = [1.5, -0.5]
        win.future_states[:, 3:5] = 0.0
        assert WaypointCost(np.array([1.5, -0.5])).value(win) == pytest.approx(0.0, abs=1e-12)

    def test_at_goal_moving(self):
        rng = np.random.default_rng(5)
        win = random_window(rng, H=1)
        win.future_states[0, 0:2] = [0.0, 0.0]
        win.future_states[0, 3:5] = [1.0, 0.0]
        # d=0: velocity weight e^0 = 1, position weight 0
        assert WaypointCost(np.zeros(2)).value(win) == pytest.approx(1.0, abs=1e-12)

    def test_hand_value(self):
        rng = np.random.default_rng(6)
        win = random_window(rng, H=1)
        win.future_states[0, 0:2] = [1.0, 0.0]
        win.future_states[0, 3:5] = [0.5, 0.0]
        expected = (1 - np.exp(-2.0)) * 1.0 + np.exp(-2.0) * 0.25
        assert WaypointCost(np.zeros(2)).value(win) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.8985, abs=1e-4)

    def test_gradient_fd_weights_detached(self):
        rng = np.random.default_rng(7)
        cost = WaypointCost(np.array([0.5, 0.5]))
        # analytic grad treats the blend distance as constant; compare to an
        # FD oracle of the same detached objective
        for _ in range(20):
            win = random_window(rng)
            dp, w_pos, w_vel = cost._weights(win)

            class Detached:
                def value(self, w):
                    dpp = w.future_states[:, 0:2] - cost.g_p
                    vel = w.future_states[:, 3:5]
                    return float(np.sum(w_pos * np.sum(dpp * dpp, axis=1) + w_vel * np.sum(vel * vel, axis=1)))

            fd = finite_difference_grad(Detached(), win)
            np.testing.assert_allclose(cost.grad(win), fd, rtol=1e-5, atol=1e-8)


class TestSdfCost:
    def scene(self):
        return Sdf.from_primitives(
            [
                {"kind": "circle", "center": [1.0, 0.5], "radius": 0.6},
                {"kind": "box", "center": [-2.0, 0.0], "half_extents": [0.5, 0.5]},
            ]
        )

    def test_unit_clearance_zero(self):
        # clearance exactly 1 m -> barrier term 0
        sdf = Sdf.from_primitives([{"kind": "circle", "center": [0.0, 0.0], "radius": 1.0}])
        spec = EncodingSpec(BODY_POS, 1, 0)
        s = np.zeros((1, spec.state_dim))
        s[0, 0:2] = [2.1, 0.0]  # root 2.1 from center, radius 0.1 -> clearance 1.0
        win = DenormWindow(s, spec)
        cost = SdfCost(sdf, np.array([0.1]), delta=0.1)
        assert cost.value(win) == pytest.approx(0.0, abs=1e-9)

    def test_knot_value(self):
        sdf = Sdf.from_primitives([{"kind": "circle", "center": [0.0, 0.0], "radius": 1.0}])
        spec = EncodingSpec(BODY_POS, 1, 0)
        s = np.zeros((1, spec.state_dim))
        delta = 0.1
        s[0, 0:2] = [1.0 + 0.1 + delta, 0.0]
        win = DenormWindow(s, spec)
        cost = SdfCost(sdf, np.array([0.1]), delta=delta)
        assert cost.value(win) == pytest.approx(-np.log(delta), abs=1e-9)

    def test_gradient_fd(self):
        rng = np.random.default_rng(8)
        sdf = self.scene()
        spec = EncodingSpec(BODY_POS, 5, 0)
        cost = SdfCost(sdf, np.full(5, 0.1), delta=0.15, frame=(0.3, -0.2, 0.7))
        checked = 0
        while checked < 20:
            s = rng.standard_normal((6, spec.state_dim)) * 2.0
            win = DenormWindow(s, spec)
            # keep clear of the medial axis and of barrier-argument kinks
            _, _, _, world = cost._proxies(win)
            d, _ = sdf.query_batch(world.reshape(-1, 2))
            if np.any(np.abs(d) < 5e-3):
                continue
            g = cost.grad(win)
            fd = finite_difference_grad(cost, win, eps=1e-7)
            np.testing.assert_allclose(g, fd, rtol=2e-4, atol=5e-6)
            checked += 1


class TestComposition:
    def test_weighted_sum_linearity(self):
        rng = np.random.default_rng(9)
        win = random_window(rng)
        c1 = JoystickCost(np.array([0.2, 0.0]))
        c2 = WaypointCost(np.array([1.0, 1.0]))
        combo = WeightedSum([c1, c2], [0.7, 1.3])
        assert combo.value(win) == pytest.approx(0.7 * c1.value(win) + 1.3 * c2.value(win), rel=1e-12)
        np.testing.assert_allclose(combo.grad(win), 0.7 * c1.grad(win) + 1.3 * c2.grad(win), atol=1e-12)

    def test_costs_nonnegative(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            win = random_window(rng)
            assert JoystickCost(rng.standard_normal(2)).value(win) >= 0.0
            assert WaypointCost(rng.standard_normal(2)).value(win) >= 0.0
