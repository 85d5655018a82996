#!/usr/bin/env python3
"""Compare the numba kernels against their numpy twins.

Usage:
    python benchmarks/bench_kernels.py

The same comparison can be forced onto the numpy path everywhere with
GAITFORGE_NO_NUMBA=1 (then both columns run the numpy build).
"""

import time

import numpy as np

from gaitforge._accel import NUMBA_ENABLED
from gaitforge.config import Config
from gaitforge.guidance import Sdf, _sdf_batch_numba, _sdf_batch_numpy
from gaitforge.mdp import impedance_gains
from gaitforge.sim.walker import (
    WalkerState,
    _substeps_numba,
    _substeps_numpy,
    build_walker_model,
    make_params,
)


def timeit(fn, *args, repeat=50, warmup=3):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_walker():
    cfg = Config()
    params = make_params(cfg.walker)
    model = build_walker_model(cfg.walker)
    kp, kd = impedance_gains(model, cfg.impedance)
    q_des = np.asarray(cfg.walker.nominal_pose, dtype=np.float64)
    tl = np.full(4, cfg.walker.torque_limit)
    forces = np.zeros(8)

    def run(kernel):
        st = WalkerState(np.array([0.0, 0.5, 0.0, *cfg.walker.nominal_pose]), np.zeros(7))
        def step():
            kernel(st.q, st.v, st.anchors, st.in_contact, q_des, kp, kd, tl,
                   params.packed, cfg.walker.friction, 0.0, 0.0, 10, 1, forces)
        return step

    rows = []
    t_np = timeit(run(_substeps_numpy), repeat=50)
    t_nb = timeit(run(_substeps_numba), repeat=200) if NUMBA_ENABLED else t_np
    rows.append(("walker control step (10 substeps)", t_np, t_nb))
    return rows


def bench_sdf():
    sdf = Sdf.from_primitives(
        [{"kind": "circle", "center": [float(i), 0.0], "radius": 0.3} for i in range(32)]
        + [{"kind": "box", "center": [float(i), 2.0], "half_extents": [0.4, 0.2]} for i in range(32)]
    )
    pts = np.random.default_rng(0).uniform(-5, 35, (2000, 2))
    rows = []
    t_np = timeit(lambda: _sdf_batch_numpy(sdf.kinds, sdf.params, pts), repeat=5)
    t_nb = timeit(lambda: _sdf_batch_numba(sdf.kinds, sdf.params, pts), repeat=50) if NUMBA_ENABLED else t_np
    rows.append(("SDF batch query (2000 pts, 64 prims)", t_np, t_nb))
    return rows


def main():
    print(f"numba enabled: {NUMBA_ENABLED} (GAITFORGE_NO_NUMBA to disable)\n")
    rows = bench_walker() + bench_sdf()
    w = max(len(r[0]) for r in rows) + 2
    print(f"{'kernel':<{w}} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    print("-" * (w + 36))
    for name, t_np, t_nb in rows:
        print(f"{name:<{w}} {t_np * 1e3:>10.3f}ms {t_nb * 1e3:>10.3f}ms {t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
