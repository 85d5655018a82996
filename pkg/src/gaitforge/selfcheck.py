"""Built-in invariant suite for `gaitforge check`: fast, dependency-free
verifications of the core numeric contracts."""

from __future__ import annotations

import numpy as np

from .config import Config
from .dataset import BODY_POS, EncodingSpec
from .diffusion.schedule import cosine_schedule
from .geom import Pose, compose, footprint, inverse, quat_to_matrix, so3_exp, so3_log
from .guidance import (
    DenormWindow,
    JoystickCost,
    Sdf,
    WaypointCost,
    finite_difference_grad,
    relaxed_barrier,
    relaxed_barrier_grad,
)
from .sampler import AdaptiveSampler


def run_selfcheck(cfg: Config | None = None, echo=print) -> list:
    cfg = cfg or Config()
    failures = []

    def check(name, ok):
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(0)

    # geometry round trips
    worst = 0.0
    for _ in range(2000):
        q = rng.normal(size=4)
        R = quat_to_matrix(q / np.linalg.norm(q))
        worst = max(worst, float(np.abs(so3_exp(so3_log(R)) - R).max()))
    check(f"so3 log/exp round trip (worst {worst:.1e})", worst < 1e-9)

    ok = True
    for _ in range(200):
        q = rng.normal(size=4)
        R = quat_to_matrix(q / np.linalg.norm(q))
        if abs(R[2, 0]) > 0.99:
            continue
        T = Pose(rng.normal(size=3), R)
        a, b = footprint(footprint(T)), footprint(T)
        ok &= bool(np.allclose(a.p, b.p, atol=1e-12) and np.allclose(a.R, b.R, atol=1e-12))
        I = compose(T, inverse(T))
        ok &= bool(np.allclose(I.p, 0, atol=1e-12) and np.allclose(I.R, np.eye(3), atol=1e-12))
    check("footprint idempotence + pose inverse", ok)

    # sampler simplex
    ok = True
    for _ in range(500):
        s = AdaptiveSampler(bins=int(rng.integers(1, 30)), cfg=cfg.sampler)
        s.rates = rng.uniform(0, 1, s.bins)
        p = s.probabilities()
        ok &= bool(np.all(p >= -1e-15) and abs(p.sum() - 1) < 1e-12)
    check("adaptive sampler simplex", ok)

    # barrier continuity at the knot
    delta = cfg.guidance.barrier_delta
    ok = abs(relaxed_barrier(delta - 1e-12, delta) - relaxed_barrier(delta + 1e-12, delta)) < 1e-9
    ok &= abs(relaxed_barrier_grad(delta - 1e-12, delta) - relaxed_barrier_grad(delta + 1e-12, delta)) < 1e-6
    check("relaxed barrier C1 at the knot", bool(ok))

    # cost gradients vs finite differences
    spec = EncodingSpec(BODY_POS, 5, 0)
    ok = True
    for cost in (JoystickCost(np.array([0.3, -0.1])), WaypointCost(np.array([1.0, 0.5]))):
        for _ in range(5):
            win = DenormWindow(rng.standard_normal((6, spec.state_dim)), spec)
            if isinstance(cost, WaypointCost):
                dp, w_pos, w_vel = cost._weights(win)

                class Detached:
                    def value(self, w):
                        dpp = w.future_states[:, 0:2] - cost.g_p
                        vel = w.future_states[:, 3:5]
                        return float(np.sum(w_pos * np.sum(dpp**2, 1) + w_vel * np.sum(vel**2, 1)))

                fd = finite_difference_grad(Detached(), win)
            else:
                fd = finite_difference_grad(cost, win)
            ok &= bool(np.allclose(cost.grad(win), fd, rtol=1e-4, atol=1e-6))
    check("joystick/waypoint gradients vs finite differences", ok)

    # SDF properties
    sdf = Sdf.from_primitives(
        [
            {"kind": "circle", "center": [0.4, -0.3], "radius": 0.8},
            {"kind": "box", "center": [2.0, 1.0], "half_extents": [0.6, 0.9]},
        ]
    )
    ok = True
    for _ in range(300):
        p = rng.uniform(-4, 4, 2)
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        d1, g = sdf.query(p)
        d2, _ = sdf.query(p + 1e-4 * u)
        ok &= abs(d2 - d1) <= 1e-4 + 1e-9
        ok &= abs(np.linalg.norm(g) - 1) < 1e-9
    check("SDF 1-Lipschitz with unit gradients", bool(ok))

    # schedule identities
    sched = cosine_schedule(cfg.diffusion.denoise_steps)
    ab = sched.alpha_bars
    ok = bool(ab[0] == 1.0 and np.all(np.diff(ab) < 0))
    k = np.arange(len(ab))
    ok &= bool(np.allclose(sched.sqrt_ab(k) ** 2 + (1 - ab), 1.0, atol=1e-12))
    check("noise schedule identities", ok)

    echo(f"{'ALL CHECKS PASSED' if not failures else f'{len(failures)} CHECK(S) FAILED'}")
    return failures
