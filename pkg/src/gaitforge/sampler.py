"""Adaptive start-phase sampling over one-second bins.

Failure rates are EMA-smoothed per bin; sampling scores spread each bin's
rate backwards over the preceding K bins with an exponentially decaying
kernel (failures credit the bins they started from), and the resulting
distribution is mixed with a uniform floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import SamplerConfig


class BinOutOfRange(IndexError):
    pass


@dataclass
class AdaptiveSampler:
    bins: int
    cfg: SamplerConfig = field(default_factory=SamplerConfig)
    rates: np.ndarray = None  # smoothed failure rate per bin

    def __post_init__(self):
        if self.rates is None:
            # unvisited bins presumed hard: guarantees early coverage
            self.rates = np.ones(self.bins)
        self.rates = np.asarray(self.rates, dtype=np.float64)
        if self.rates.shape != (self.bins,):
            raise ValueError("rates length must equal bin count")

    def record_episode(self, start_bin: int, failed: bool):
        if not 0 <= start_bin < self.bins:
            raise BinOutOfRange(f"bin {start_bin} outside [0, {self.bins})")
        beta = self.cfg.ema_step
        self.rates[start_bin] = (1.0 - beta) * self.rates[start_bin] + beta * (1.0 if failed else 0.0)

    def scores(self) -> np.ndarray:
        """Kernel-spread rates: w_s = sum_u gamma^u r[s+u], zero-padded."""
        K = self.cfg.kernel_window
        gamma = self.cfg.kernel_decay
        padded = np.concatenate([self.rates, np.zeros(K)])
        w = np.zeros(self.bins)
        for u in range(K):
            w += gamma**u * padded[u : u + self.bins]
        return w

    def probabilities(self) -> np.ndarray:
        w = self.scores()
        total = w.sum()
        p = w / total if total > 0 else np.full(self.bins, 1.0 / self.bins)
        lam = self.cfg.uniform_mix
        return lam / self.bins + (1.0 - lam) * p

    def sample_start(self, rng: np.random.Generator, duration: float | None = None) -> float:
        """Draw a bin from the mixed categorical, then a uniform offset
        inside that one-second bin (clipped to the motion duration)."""
        p = self.probabilities()
        s = int(rng.choice(self.bins, p=p))
        t = s + float(rng.uniform(0.0, 1.0))
        if duration is not None:
            t = min(t, duration)
        return t

    def to_json(self) -> str:
        return json.dumps(
            {
                "bins": self.bins,
                "rates": self.rates.tolist(),
                "ema_step": self.cfg.ema_step,
                "kernel_decay": self.cfg.kernel_decay,
                "kernel_window": self.cfg.kernel_window,
                "uniform_mix": self.cfg.uniform_mix,
            }
        )

    @staticmethod
    def from_json(text: str) -> "AdaptiveSampler":
        d = json.loads(text)
        cfg = SamplerConfig(
            ema_step=d["ema_step"],
            kernel_decay=d["kernel_decay"],
            kernel_window=d["kernel_window"],
            uniform_mix=d["uniform_mix"],
        )
        return AdaptiveSampler(bins=d["bins"], cfg=cfg, rates=np.asarray(d["rates"]))


class UniformSampler:
    """Baseline with the same interface; used by the bandit comparison."""

    def __init__(self, bins: int):
        self.bins = bins

    def record_episode(self, start_bin: int, failed: bool):
        pass

    def probabilities(self) -> np.ndarray:
        return np.full(self.bins, 1.0 / self.bins)

    def sample_start(self, rng: np.random.Generator, duration: float | None = None) -> float:
        t = float(rng.uniform(0.0, self.bins))
        if duration is not None:
            t = min(t, duration)
        return t
