"""Noise schedules and the DDPM coefficient tables.

The update rule is the standard posterior-mean parameterization:

    eps_hat  = (x_k - sqrt(abar_k) x0_hat) / sqrt(1 - abar_k)
    x_{k-1}  = (x_k - beta_k / sqrt(1 - abar_k) * eps_hat) / sqrt(alpha_k)
               + sigma_k z,   sigma_k^2 = (1 - abar_{k-1}) / (1 - abar_k) beta_k

i.e. the named coefficients map to alpha-coef = 1/sqrt(alpha_k),
gamma_k = beta_k / sqrt(1 - abar_k), and sigma_k^2 = beta-tilde_k. Index 0
is the clean data: abar_0 = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray  # (T,) beta_1..beta_T at indices 0..T-1

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("betas must lie in (0, 1)")
        if np.any(np.diff(b) < -1e-12):
            raise ValueError("betas must be non-decreasing")
        object.__setattr__(self, "betas", b)

    @property
    def T(self) -> int:
        return self.betas.shape[0]

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        """(T+1,) with abar_0 = 1; abar_k = prod_{i<=k} alpha_i."""
        return np.concatenate([[1.0], np.cumprod(self.alphas)])

    def sqrt_ab(self, k):
        return np.sqrt(self.alpha_bars[k])

    def sqrt_1mab(self, k):
        return np.sqrt(1.0 - self.alpha_bars[k])

    def posterior_sigma(self, k: int) -> float:
        """sigma_k for the reverse step k -> k-1 (beta-tilde form)."""
        ab = self.alpha_bars
        if k <= 1:
            return 0.0
        var = (1.0 - ab[k - 1]) / (1.0 - ab[k]) * self.betas[k - 1]
        return float(np.sqrt(max(var, 0.0)))


def cosine_schedule(T: int, s: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    k = np.arange(T + 1)
    f = np.cos((k / T + s) / (1 + s) * np.pi / 2) ** 2
    ab = f / f[0]
    betas = np.clip(1.0 - ab[1:] / ab[:-1], 1e-8, max_beta)
    return NoiseSchedule(np.maximum.accumulate(betas))


def linear_schedule(T: int, beta_start: float = 1e-3, beta_end: float = 0.35) -> NoiseSchedule:
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def make_schedule(kind: str, T: int, beta_start: float = 1e-3, beta_end: float = 0.35) -> NoiseSchedule:
    if kind == "cosine":
        return cosine_schedule(T)
    if kind == "linear":
        return linear_schedule(T, beta_start, beta_end)
    raise ValueError(f"unknown schedule {kind!r}")
