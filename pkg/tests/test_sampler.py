import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitforge.config import SamplerConfig
from gaitforge.sampler import AdaptiveSampler, BinOutOfRange, UniformSampler


def make(bins=5, **kw):
    return AdaptiveSampler(bins=bins, cfg=SamplerConfig(**kw))


class TestRecordEpisode:
    def test_ema_arithmetic(self):
        s = make(3, ema_step=0.1)
        s.rates[:] = 0.5
        s.record_episode(1, failed=True)
        assert s.rates[1] == pytest.approx(0.55, abs=1e-15)
        assert s.rates[0] == 0.5 and s.rates[2] == 0.5

    def test_success_fixed_point_at_zero(self):
        s = make(3, ema_step=0.1)
        s.rates[:] = 0.0
        s.record_episode(0, failed=False)
        assert s.rates[0] == 0.0

    def test_failures_drive_to_one_monotonically(self):
        s = make(2, ema_step=0.2)
        s.rates[:] = 0.3
        prev = s.rates[0]
        for _ in range(50):
            s.record_episode(0, failed=True)
            assert s.rates[0] >= prev
            prev = s.rates[0]
        assert s.rates[0] == pytest.approx(1.0, abs=1e-4)

    def test_bin_out_of_range(self):
        s = make(3)
        with pytest.raises(BinOutOfRange):
            s.record_episode(3, failed=True)

    @given(st.floats(0, 1), st.booleans(), st.floats(0.001, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_rate_stays_in_unit_interval(self, r0, failed, beta):
        s = make(1, ema_step=beta)
        s.rates[0] = r0
        s.record_episode(0, failed)
        assert 0.0 <= s.rates[0] <= 1.0


class TestProbabilities:
    def test_equal_rates_uniform_k1(self):
        s = make(4, kernel_window=1, uniform_mix=0.0)
        s.rates[:] = 0.37
        np.testing.assert_allclose(s.probabilities(), 0.25, atol=1e-12)

    def test_hand_example(self):
        s = make(3, kernel_decay=0.5, kernel_window=2, uniform_mix=0.0)
        s.rates = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(s.scores(), [0.5, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(s.probabilities(), [1 / 3, 2 / 3, 0.0], atol=1e-12)

    def test_hand_example_mixed(self):
        s = make(3, kernel_decay=0.5, kernel_window=2, uniform_mix=0.3)
        s.rates = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(
            s.probabilities(), [0.1 + 0.7 / 3, 0.1 + 0.7 * 2 / 3, 0.1], atol=1e-12
        )

    def test_all_zero_rates_fall_back_to_uniform(self):
        s = make(6, uniform_mix=0.0)
        s.rates[:] = 0.0
        np.testing.assert_allclose(s.probabilities(), 1 / 6, atol=1e-15)

    @given(
        st.lists(st.floats(0, 1), min_size=1, max_size=30),
        st.floats(0.01, 0.99),
        st.integers(1, 8),
        st.floats(0, 1),
    )
    @settings(max_examples=300, deadline=None)
    def test_simplex_invariant(self, rates, gamma, K, lam):
        s = AdaptiveSampler(
            bins=len(rates),
            cfg=SamplerConfig(kernel_decay=gamma, kernel_window=K, uniform_mix=lam),
            rates=np.array(rates),
        )
        p = s.probabilities()
        assert np.all(p >= -1e-15)
        assert abs(p.sum() - 1.0) < 1e-12

    def test_mixing_floor(self):
        s = make(8, uniform_mix=0.2)
        s.rates[:] = 0.0
        s.rates[3] = 1.0
        p = s.probabilities()
        assert np.all(p >= 0.2 / 8 - 1e-15)

    def test_noncausal_credit_direction(self):
        cfg = SamplerConfig(kernel_decay=0.7, kernel_window=3, uniform_mix=0.0)
        base = AdaptiveSampler(bins=8, cfg=cfg, rates=np.full(8, 0.2))
        p0 = base.probabilities()
        bumped = AdaptiveSampler(bins=8, cfg=cfg, rates=base.rates.copy())
        s = 5
        bumped.rates[s] += 0.5
        p1 = bumped.probabilities()
        for j in range(8):
            if s - cfg.kernel_window + 1 <= j <= s:
                assert p1[j] > p0[j]
            else:
                assert p1[j] <= p0[j] + 1e-15


class TestSampleStart:
    def test_degenerate_categorical(self):
        s = make(3, uniform_mix=0.0)
        s.rates = np.array([1.0, 0.0, 0.0])
        # gamma window spreads rate 0 credit onto bin 0 only
        s.cfg = SamplerConfig(kernel_window=1, uniform_mix=0.0)
        rng = np.random.default_rng(0)
        draws = [s.sample_start(rng) for _ in range(200)]
        assert all(0.0 <= t < 1.0 for t in draws)

    def test_uniform_frequencies(self):
        s = make(4, kernel_window=1, uniform_mix=0.0)
        s.rates[:] = 0.5
        rng = np.random.default_rng(1)
        n = 100_000
        bins = np.array([int(s.sample_start(rng)) for _ in range(n)])
        freq = np.bincount(bins, minlength=4) / n
        sigma = np.sqrt(0.25 * 0.75 / n)
        assert np.all(np.abs(freq - 0.25) < 3 * sigma + 1e-12)

    def test_mix_floor_reaches_every_bin(self):
        s = make(5, uniform_mix=0.5)
        s.rates[:] = 0.0
        s.rates[0] = 1.0
        rng = np.random.default_rng(2)
        bins = {int(s.sample_start(rng)) for _ in range(2000)}
        assert bins == {0, 1, 2, 3, 4}

    def test_duration_clip(self):
        s = make(10)
        rng = np.random.default_rng(3)
        for _ in range(100):
            assert s.sample_start(rng, duration=4.5) <= 4.5


class TestSerialization:
    def test_round_trip(self):
        s = make(7, ema_step=0.02, kernel_decay=0.9, kernel_window=4, uniform_mix=0.15)
        rng = np.random.default_rng(4)
        for _ in range(30):
            s.record_episode(int(rng.integers(7)), bool(rng.integers(2)))
        s2 = AdaptiveSampler.from_json(s.to_json())
        np.testing.assert_allclose(s2.rates, s.rates)
        np.testing.assert_allclose(s2.probabilities(), s.probabilities())


class SyntheticBandit:
    """10 bins; bin 7 fails at 0.9 until visited 200 times, others at 0.05.

    Training episodes are drawn by the sampler and counted as visits.
    Convergence is an out-of-training checkpoint evaluation (the sampling
    distribution must not change the measuring stick): every 50 training
    episodes, a fresh evaluation of 20 episodes (two sweeps over all bins)
    must be all-success.
    """

    EVAL_EVERY = 50

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.eval_rng = np.random.default_rng(seed + 10_007)
        self.visits = np.zeros(10, dtype=int)

    def fail_prob(self, b: int) -> float:
        if b == 7 and self.visits[7] < 200:
            return 0.9
        return 0.05

    def run_episode(self, start_bin: int) -> bool:
        failed = bool(self.rng.uniform() < self.fail_prob(start_bin))
        self.visits[start_bin] += 1
        return failed

    def evaluation_all_success(self) -> bool:
        for _ in range(2):
            for b in range(10):
                if self.eval_rng.uniform() < self.fail_prob(b):
                    return False
        return True


def episodes_to_convergence(sampler, seed, max_episodes=30_000):
    env = SyntheticBandit(seed)
    rng = np.random.default_rng(seed + 991)
    for ep in range(1, max_episodes + 1):
        b = int(sampler.sample_start(rng))
        failed = env.run_episode(b)
        sampler.record_episode(b, failed)
        if ep % SyntheticBandit.EVAL_EVERY == 0 and env.evaluation_all_success():
            return ep
    return max_episodes


@pytest.mark.slow
def test_bandit_adaptive_beats_uniform():
    adaptive, uniform = [], []
    for seed in range(20):
        adaptive.append(episodes_to_convergence(AdaptiveSampler(bins=10), seed))
        uniform.append(episodes_to_convergence(UniformSampler(bins=10), seed))
    assert np.median(adaptive) < np.median(uniform)
