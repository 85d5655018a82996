"""Co-diffusion training: independent state/action noise indices, x0 MSE
with the action-horizon loss mask, Adam updates, CSV loss logs, and a
byte-stable checkpoint format (JSON header + raw parameter blob)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import DiffusionConfig
from ..dataset import EncodingSpec, WindowDataset
from .nn import AdamOptimizer, TrajectoryDenoiser
from .schedule import NoiseSchedule, make_schedule


class NonFiniteLoss(RuntimeError):
    pass


@dataclass
class DiffusionModel:
    """Denoiser network plus everything sampling needs."""

    net: TrajectoryDenoiser
    schedule: NoiseSchedule
    spec: EncodingSpec
    action_horizon: int  # H_a
    state_mean: np.ndarray
    state_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray
    control_dt: float = 0.02
    meta: dict = field(default_factory=dict)

    @property
    def history(self) -> int:
        return self.net.layout.history

    @property
    def horizon(self) -> int:
        return self.net.layout.horizon

    def normalize_states(self, x):
        return (x - self.state_mean) / self.state_std

    def normalize_actions(self, a):
        return (a - self.action_mean) / self.action_std

    def denormalize_states(self, x):
        return x * self.state_std + self.state_mean

    def denormalize_actions(self, a):
        return a * self.action_std + self.action_mean


def forward_noising(fut_s, fut_a, ks, ka, eps_s, eps_a, schedule: NoiseSchedule):
    """Corrupt state dims with abar_{k_s} and action dims with abar_{k_a}:
    x_k = sqrt(abar) x0 + sqrt(1 - abar) eps, elementwise per sample."""
    ab = schedule.alpha_bars
    cs = np.sqrt(ab[ks])[:, None, None]
    ca = np.sqrt(ab[ka])[:, None, None]
    ns = np.sqrt(1.0 - ab[ks])[:, None, None]
    na = np.sqrt(1.0 - ab[ka])[:, None, None]
    return cs * fut_s + ns * eps_s, ca * fut_a + na * eps_a


def masked_mse_and_grads(pred_s, pred_a, tgt_s, tgt_a, action_horizon, action_weight=1.0):
    """Part-balanced MSE: states over all H steps, actions over the first
    H_a steps only, each averaged within its own part so a wide state
    encoding cannot starve the action head (at body-pos walker dims the
    actions would otherwise be 3% of the objective). The gradient w.r.t.
    masked action predictions is exactly zero."""
    mask = np.zeros_like(pred_a)
    mask[:, :action_horizon, :] = 1.0
    n_s = pred_s.size
    n_a = int(mask.sum())
    ds_ = pred_s - tgt_s
    da_ = mask * (pred_a - tgt_a)
    loss = float(np.sum(ds_ * ds_)) / n_s + action_weight * float(np.sum(da_ * da_)) / max(n_a, 1)
    return loss, 2.0 * ds_ / n_s, 2.0 * action_weight * da_ / max(n_a, 1)


def train_step(model: DiffusionModel, opt: AdamOptimizer, ds: WindowDataset, idx: np.ndarray, rng) -> float:
    """One minibatch update on normalized windows ``idx``; returns loss."""
    hs = ds.normalize_states(ds.hist_states[idx].astype(np.float64))
    ha = ds.normalize_actions(ds.hist_actions[idx].astype(np.float64))
    fs = ds.normalize_states(ds.future_states[idx].astype(np.float64))
    fa = ds.normalize_actions(ds.future_actions[idx].astype(np.float64))
    B = hs.shape[0]
    T = model.schedule.T
    ks = rng.integers(1, T + 1, size=B)
    ka = rng.integers(1, T + 1, size=B)
    eps_s = rng.standard_normal(fs.shape)
    eps_a = rng.standard_normal(fa.shape)
    noisy_s, noisy_a = forward_noising(fs, fa, ks, ka, eps_s, eps_a, model.schedule)
    pred_s, pred_a, cache = model.net.forward(hs, ha, noisy_s, noisy_a, ks, ka, train=True, rng=rng)
    loss, dps, dpa = masked_mse_and_grads(
        pred_s, pred_a, fs, fa, model.action_horizon, action_weight=model.meta.get("action_loss_weight", 1.0)
    )
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss}")
    grads = model.net.backward(cache, dps, dpa)
    opt.step(model.net.params, grads)
    return loss


def train(
    dataset: WindowDataset,
    cfg: DiffusionConfig,
    seed: int = 0,
    steps: int | None = None,
    log_every: int = 50,
    progress=None,
) -> tuple[DiffusionModel, list]:
    """Train a denoiser on a window dataset; returns (model, loss log).

    Deterministic for a fixed seed: one rng drives batch selection, noise
    draws, and dropout.
    """
    steps = cfg.train_steps if steps is None else steps
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    spec = EncodingSpec(dataset.kind, *_spec_counts(dataset))
    net = TrajectoryDenoiser(
        state_dim=dataset.state_dim,
        action_dim=dataset.action_dim,
        history=dataset.history,
        horizon=dataset.horizon,
        T=cfg.denoise_steps,
        layers=cfg.layers,
        heads=cfg.heads,
        embed_dim=cfg.embed_dim,
        mlp_ratio=cfg.mlp_ratio,
        dropout=cfg.dropout,
        dtype=dtype,
        seed=seed,
    )
    model = DiffusionModel(
        net=net,
        schedule=make_schedule(cfg.schedule, cfg.denoise_steps, cfg.beta_start, cfg.beta_end),
        spec=spec,
        action_horizon=cfg.action_horizon,
        state_mean=dataset.state_mean.copy(),
        state_std=dataset.state_std.copy(),
        action_mean=dataset.action_mean.copy(),
        action_std=dataset.action_std.copy(),
        meta={**dataset.meta, "action_loss_weight": cfg.action_loss_weight},
    )
    opt = AdamOptimizer(net.params, lr=cfg.learning_rate, clip=cfg.grad_clip)
    rng = np.random.default_rng(seed)
    log = []
    for step in range(1, steps + 1):
        idx = rng.integers(0, dataset.n_windows, size=min(cfg.batch_size, dataset.n_windows))
        loss = train_step(model, opt, dataset, idx, rng)
        if step % log_every == 0 or step == 1 or step == steps:
            log.append((step, loss))
            if progress:
                progress(step, loss)
    return model, log


def _spec_counts(dataset: WindowDataset):
    from ..dataset import BODY_POS

    if dataset.kind == BODY_POS:
        n_bodies = (dataset.state_dim - 9) // 6
        return n_bodies, dataset.meta.get("n_joints", 0)
    n_joints = (dataset.state_dim - 9) // 2
    return dataset.meta.get("n_bodies", 0), n_joints


def save_loss_log(log: list, path: str | Path):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for step, loss in log:
            fh.write(f"{step},{loss:.9f}\n")


def save_checkpoint(model: DiffusionModel, path: str | Path):
    """JSON header line + parameters concatenated in sorted key order."""
    path = Path(path)
    net = model.net
    header = {
        "state_dim": net.ds,
        "action_dim": net.da,
        "history": net.layout.history,
        "horizon": net.layout.horizon,
        "action_horizon": model.action_horizon,
        "T": model.schedule.T,
        "betas": model.schedule.betas.tolist(),
        "layers": net.n_layers,
        "heads": net.heads,
        "embed_dim": net.D,
        "mlp_ratio": net.hidden // net.D,
        "dropout": net.dropout,
        "dtype": np.dtype(net.dtype).name,
        "kind": model.spec.kind,
        "n_bodies": model.spec.n_bodies,
        "n_joints": model.spec.n_joints,
        "control_dt": model.control_dt,
        "state_mean": model.state_mean.tolist(),
        "state_std": model.state_std.tolist(),
        "action_mean": model.action_mean.tolist(),
        "action_std": model.action_std.tolist(),
        "meta": model.meta,
        "params": {k: list(v.shape) for k, v in sorted(net.params.items())},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for k in sorted(net.params):
            fh.write(np.ascontiguousarray(net.params[k]).astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> DiffusionModel:
    path = Path(path)
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        blob = np.frombuffer(fh.read(), dtype="<f8")
    dtype = np.float32 if header["dtype"] == "float32" else np.float64
    net = TrajectoryDenoiser(
        state_dim=header["state_dim"],
        action_dim=header["action_dim"],
        history=header["history"],
        horizon=header["horizon"],
        T=header["T"],
        layers=header["layers"],
        heads=header["heads"],
        embed_dim=header["embed_dim"],
        mlp_ratio=header["mlp_ratio"],
        dropout=header["dropout"],
        dtype=dtype,
        seed=0,
    )
    off = 0
    for k in sorted(net.params):
        shape = tuple(header["params"][k])
        size = int(np.prod(shape)) if shape else 1
        net.params[k] = blob[off : off + size].reshape(shape).astype(dtype)
        off += size
    if off != blob.size:
        raise ValueError("checkpoint blob size mismatch")
    return DiffusionModel(
        net=net,
        schedule=NoiseSchedule(np.asarray(header["betas"])),
        spec=EncodingSpec(header["kind"], header["n_bodies"], header["n_joints"]),
        action_horizon=header["action_horizon"],
        state_mean=np.asarray(header["state_mean"]),
        state_std=np.asarray(header["state_std"]),
        action_mean=np.asarray(header["action_mean"]),
        action_std=np.asarray(header["action_std"]),
        control_dt=header["control_dt"],
        meta=header.get("meta", {}),
    )
