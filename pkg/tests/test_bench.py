import numpy as np
import pytest

from gaitforge import bench
from gaitforge.config import Config
from gaitforge.sim.episode import WalkerEnv
from gaitforge.sim.expert import WalkerExpert, scripted_gait_rollout


@pytest.fixture(scope="module")
def setup():
    cfg = Config()
    env = WalkerEnv(cfg)
    ref, _ = scripted_gait_rollout(cfg.gait, cfg.walker, cfg.impedance)

    def factory(rng):
        return WalkerExpert(env.model, cfg.gait, env.kp, smoothing=cfg.gait.smoothing)

    return cfg, env, ref, factory


@pytest.mark.slow
class TestWalkPerturb:
    def test_expert_zero_perturbation_is_perfect(self, setup):
        cfg, env, ref, factory = setup
        import dataclasses

        c2 = dataclasses.replace(cfg)
        c2.bench = dataclasses.replace(cfg.bench, perturb_range=(0.0, 0.0))
        rep = bench.walk_perturb(factory, c2, ref, runs=5, seed0=0)
        assert rep.successes == 5
        assert rep.falls == 0

    def test_report_deterministic_given_seeds(self, setup):
        cfg, env, ref, factory = setup
        a = bench.walk_perturb(factory, cfg, ref, runs=4, seed0=11)
        b = bench.walk_perturb(factory, cfg, ref, runs=4, seed0=11)
        assert a.to_dict() == b.to_dict()

    def test_fall_detection_monotone_in_threshold(self, setup):
        # a stricter (higher) head-height threshold can only add falls
        cfg, env, ref, factory = setup
        import dataclasses

        counts = []
        for frac in (0.15, 0.5, 0.8):
            c2 = dataclasses.replace(cfg)
            c2.bench = dataclasses.replace(cfg.bench, fall_head_fraction=frac, perturb_range=(0.2, 0.45))
            rep = bench.walk_perturb(factory, c2, ref, runs=6, seed0=21)
            counts.append(rep.falls)
        assert counts[0] <= counts[1] <= counts[2]

    def test_report_serialization(self, setup, tmp_path):
        cfg, env, ref, factory = setup
        rep = bench.walk_perturb(factory, cfg, ref, runs=2, seed0=5)
        p = tmp_path / "r.json"
        rep.save(p)
        import json

        d = json.loads(p.read_text())
        assert d["runs"] == 2
        assert d["successes"] + sum(1 for l in d["logs"] if not l["success"]) == 2
        assert "mapping" in d and "config_hash" in d
