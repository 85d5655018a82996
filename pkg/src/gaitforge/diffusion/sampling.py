"""DDPM sampling with independent state/action indices collapsed to a
single k at inference, and cost-gradient guidance injected through the
predicted noise on state dimensions (reconstruction guidance: the cost is
evaluated on the denormalized clean estimate)."""

from __future__ import annotations

import numpy as np

from ..guidance import DenormWindow, GuidanceCost
from .model import DiffusionModel


def predict_clean(model: DiffusionModel, noisy_s, noisy_a, hist_s, hist_a, ks, ka):
    pred_s, pred_a, _ = model.net.forward(hist_s, hist_a, noisy_s, noisy_a, ks, ka, train=False)
    return pred_s.astype(np.float64), pred_a.astype(np.float64)


def guidance_weight(base: float, k: int, T: int, ramp: bool) -> float:
    """Optional linear ramp: 0 at k = T up to the full weight at k = 1."""
    if not ramp or T <= 1:
        return base
    return base * (T - k) / (T - 1)


def ddpm_step(
    model: DiffusionModel,
    noisy_s: np.ndarray,  # (1, H, ds) normalized
    noisy_a: np.ndarray,
    hist_s: np.ndarray,
    hist_a: np.ndarray,
    k: int,
    rng,
    guidance: GuidanceCost | None = None,
    weight: float = 1.0,
    ramp: bool = False,
):
    """One reverse step k -> k-1 on both parts (k_s = k_a = k)."""
    sched = model.schedule
    B = noisy_s.shape[0]
    kk = np.full(B, k)
    pred_s, pred_a = predict_clean(model, noisy_s, noisy_a, hist_s, hist_a, kk, kk)

    sab = sched.sqrt_ab(k)
    s1m = sched.sqrt_1mab(k)
    eps_s = (noisy_s - sab * pred_s) / s1m
    eps_a = (noisy_a - sab * pred_a) / s1m

    if guidance is not None:
        w = guidance_weight(weight, k, sched.T, ramp)
        if w != 0.0:
            costs = guidance if isinstance(guidance, (list, tuple)) else [guidance] * B
            for b, cost in enumerate(costs):
                if cost is None:
                    continue
                phys = model.denormalize_states(pred_s[b])
                grad_phys = cost.grad(DenormWindow(phys, model.spec, model.control_dt))
                # chain rule through denormalization: d/d(norm) = std * d/d(phys)
                eps_s[b] = eps_s[b] + w * s1m * grad_phys * model.state_std

    beta = sched.betas[k - 1]
    alpha = sched.alphas[k - 1]
    mean_s = (noisy_s - beta / s1m * eps_s) / np.sqrt(alpha)
    mean_a = (noisy_a - beta / s1m * eps_a) / np.sqrt(alpha)
    sigma = sched.posterior_sigma(k)
    if sigma > 0.0:
        mean_s = mean_s + sigma * rng.standard_normal(mean_s.shape)
        mean_a = mean_a + sigma * rng.standard_normal(mean_a.shape)
    return mean_s, mean_a, pred_s, pred_a


def sample(
    model: DiffusionModel,
    hist_s_phys: np.ndarray,  # (N+1, ds) physical units
    hist_a_phys: np.ndarray,  # (N, da)
    rng,
    guidance: GuidanceCost | None = None,
    weight: float = 1.0,
    ramp: bool = False,
):
    """Full reverse chain from pure noise; returns denormalized
    (future_states (H, ds), future_actions (H, da))."""
    states, actions = sample_batch(
        model, hist_s_phys[None], hist_a_phys[None], rng,
        guidance=None if guidance is None else [guidance], weight=weight, ramp=ramp,
    )
    return states[0], actions[0]


def sample_batch(
    model: DiffusionModel,
    hist_s_phys: np.ndarray,  # (B, N+1, ds) physical units
    hist_a_phys: np.ndarray,  # (B, N, da)
    rng,
    guidance: list | None = None,  # per-row costs (None entries allowed)
    weight: float = 1.0,
    ramp: bool = False,
):
    """Reverse chains for a whole batch in lockstep (one network forward
    per denoise step); the evaluation protocols lean on this."""
    B = hist_s_phys.shape[0]
    H = model.horizon
    hs = model.normalize_states(hist_s_phys)
    ha = model.normalize_actions(hist_a_phys)
    noisy_s = rng.standard_normal((B, H, model.net.ds))
    noisy_a = rng.standard_normal((B, H, model.net.da))
    for k in range(model.schedule.T, 0, -1):
        noisy_s, noisy_a, _, _ = ddpm_step(
            model, noisy_s, noisy_a, hs, ha, k, rng, guidance=guidance, weight=weight, ramp=ramp
        )
    return model.denormalize_states(noisy_s), model.denormalize_actions(noisy_a)
