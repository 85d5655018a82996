"""Causal transformer denoiser over interleaved state/action tokens, in
plain numpy with a hand-written backward pass (finite-difference checked in
the tests).

Token sequence for history N and horizon H (length 2(N+H)+1):

    s_{t-N} a_{t-N} ... s_{t-1} a_{t-1} s_t | a_t s_{t+1} ... a_{t+H-1} s_{t+H}

History tokens carry the clean noise-level embedding (k=0); future state
and action tokens carry the embeddings of their part's noise index. The
x0-prediction is read from the future tokens' own positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (x > 0.0).astype(x.dtype)


@dataclass
class TokenLayout:
    """Token order: interleaved history pairs, then the future state plan,
    then the future actions:

        s_{t-N} a_{t-N} ... s_{t-1} a_{t-1} s_t | s_{t+1}..s_{t+H} | a_t..a_{t+H-1}

    Under the causal mask every future action attends the whole (guided)
    state plan, so cost gradients on states steer the executed actions."""

    history: int  # N
    horizon: int  # H

    @property
    def n_states(self) -> int:
        return self.history + 1 + self.horizon

    @property
    def n_actions(self) -> int:
        return self.history + self.horizon

    @property
    def length(self) -> int:
        return self.n_states + self.n_actions

    @property
    def state_positions(self) -> np.ndarray:
        hist = 2 * np.arange(self.history + 1)
        fut = 2 * self.history + 1 + np.arange(self.horizon)
        return np.concatenate([hist, fut])

    @property
    def action_positions(self) -> np.ndarray:
        hist = 2 * np.arange(self.history) + 1
        fut = 2 * self.history + 1 + self.horizon + np.arange(self.horizon)
        return np.concatenate([hist, fut])

    @property
    def future_state_positions(self) -> np.ndarray:
        return self.state_positions[self.history + 1 :]

    @property
    def future_action_positions(self) -> np.ndarray:
        return self.action_positions[self.history :]


def _wgrad(x, dy):
    """(B, L, D1) x (B, L, D2) -> (D1, D2) via one GEMM."""
    D1, D2 = x.shape[-1], dy.shape[-1]
    return x.reshape(-1, D1).T @ dy.reshape(-1, D2)


class TrajectoryDenoiser:
    """x0-prediction network: (noisy future, history, noise indices) ->
    clean future estimate. Owns its parameters as a flat dict."""

    def __init__(self, state_dim, action_dim, history, horizon, T,
                 layers=4, heads=4, embed_dim=128, mlp_ratio=4, dropout=0.3,
                 dtype=np.float32, seed=0):
        assert embed_dim % heads == 0
        self.ds, self.da = state_dim, action_dim
        self.layout = TokenLayout(history, horizon)
        self.T = T
        self.n_layers = layers
        self.heads = heads
        self.D = embed_dim
        self.Dh = embed_dim // heads
        self.hidden = embed_dim * mlp_ratio
        self.dropout = dropout
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        D, L = self.D, self.layout.length

        def init(shape, scale=None):
            scale = scale if scale is not None else 1.0 / np.sqrt(shape[0])
            return (rng.normal(size=shape) * scale).astype(dtype)

        p = {
            "embed_s": init((self.ds, D)),
            "embed_s_b": np.zeros(D, dtype=dtype),
            "embed_a": init((max(self.da, 1), D)),
            "embed_a_b": np.zeros(D, dtype=dtype),
            "pos": (rng.normal(size=(L, D)) * 0.02).astype(dtype),
            "noise_emb": (rng.normal(size=(T + 1, D)) * 0.02).astype(dtype),
            "lnf_g": np.ones(D, dtype=dtype),
            "lnf_b": np.zeros(D, dtype=dtype),
            "head_s": init((D, self.ds)),
            "head_s_b": np.zeros(self.ds, dtype=dtype),
            "head_a": init((D, max(self.da, 1))),
            "head_a_b": np.zeros(max(self.da, 1), dtype=dtype),
        }
        for i in range(layers):
            p[f"l{i}_ln1_g"] = np.ones(D, dtype=dtype)
            p[f"l{i}_ln1_b"] = np.zeros(D, dtype=dtype)
            p[f"l{i}_wq"] = init((D, D))
            p[f"l{i}_bq"] = np.zeros(D, dtype=dtype)
            p[f"l{i}_wk"] = init((D, D))
            p[f"l{i}_bk"] = np.zeros(D, dtype=dtype)
            p[f"l{i}_wv"] = init((D, D))
            p[f"l{i}_bv"] = np.zeros(D, dtype=dtype)
            p[f"l{i}_wo"] = init((D, D), scale=1.0 / np.sqrt(D * 2 * layers))
            p[f"l{i}_bo"] = np.zeros(D, dtype=dtype)
            p[f"l{i}_ln2_g"] = np.ones(D, dtype=dtype)
            p[f"l{i}_ln2_b"] = np.zeros(D, dtype=dtype)
            p[f"l{i}_w1"] = init((D, self.hidden))
            p[f"l{i}_b1"] = np.zeros(self.hidden, dtype=dtype)
            p[f"l{i}_w2"] = init((self.hidden, D), scale=1.0 / np.sqrt(self.hidden * 2 * layers))
            p[f"l{i}_b2"] = np.zeros(D, dtype=dtype)
        self.params = p
        mask = np.triu(np.ones((L, L), dtype=bool), k=1)
        self._neg = np.where(mask, np.array(-1e9, dtype=dtype), np.array(0.0, dtype=dtype))

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # ---------------- forward ----------------

    def _ln(self, x, g, b):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + 1e-5)
        xhat = xc * inv
        return xhat * g + b, (xhat, inv)

    def forward(self, hist_s, hist_a, fut_s, fut_a, ks, ka, train=False, rng=None):
        """All inputs normalized. hist_s (B, N+1, ds), hist_a (B, N, da),
        fut_s (B, H, ds), fut_a (B, H, da); ks, ka int arrays (B,).
        Returns (pred_s, pred_a, cache)."""
        p = self.params
        lay = self.layout
        dt = self.dtype
        B = hist_s.shape[0]
        L, D = lay.length, self.D
        states = np.concatenate([hist_s, fut_s], axis=1).astype(dt)
        acts = np.concatenate([hist_a, fut_a], axis=1).astype(dt)

        X = np.zeros((B, L, D), dtype=dt)
        s_tok = states @ p["embed_s"] + p["embed_s_b"]
        a_tok = acts @ p["embed_a"] + p["embed_a_b"]
        # noise-level embeddings per part; history tokens use k = 0
        ne = p["noise_emb"]
        s_noise = np.zeros((B, lay.n_states, D), dtype=dt)
        s_noise[:, : lay.history + 1] = ne[0]
        s_noise[:, lay.history + 1 :] = ne[ks][:, None, :]
        a_noise = np.zeros((B, lay.n_actions, D), dtype=dt)
        a_noise[:, : lay.history] = ne[0]
        a_noise[:, lay.history :] = ne[ka][:, None, :]
        X[:, lay.state_positions] = s_tok + s_noise
        X[:, lay.action_positions] = a_tok + a_noise
        X = X + p["pos"]

        cache = {"states": states, "acts": acts, "ks": ks, "ka": ka, "layers": [], "B": B}
        keep = None
        for i in range(self.n_layers):
            A, ln1c = self._ln(X, p[f"l{i}_ln1_g"], p[f"l{i}_ln1_b"])
            Q = A @ p[f"l{i}_wq"] + p[f"l{i}_bq"]
            K = A @ p[f"l{i}_wk"] + p[f"l{i}_bk"]
            V = A @ p[f"l{i}_wv"] + p[f"l{i}_bv"]
            Qh = Q.reshape(B, L, self.heads, self.Dh).transpose(0, 2, 1, 3)
            Kh = K.reshape(B, L, self.heads, self.Dh).transpose(0, 2, 1, 3)
            Vh = V.reshape(B, L, self.heads, self.Dh).transpose(0, 2, 1, 3)
            S = Qh @ Kh.transpose(0, 1, 3, 2) * float(1.0 / np.sqrt(self.Dh))
            S = S + self._neg
            S = S - S.max(axis=-1, keepdims=True)
            E = np.exp(S)
            P = E / E.sum(axis=-1, keepdims=True)
            if train and self.dropout > 0:
                keep = (rng.random(P.shape, dtype=np.float32) >= self.dropout).astype(dt) / dt(1.0 - self.dropout)
                Pd = P * keep
            else:
                keep = None
                Pd = P
            Oh = Pd @ Vh
            O = Oh.transpose(0, 2, 1, 3).reshape(B, L, D)
            attn = O @ p[f"l{i}_wo"] + p[f"l{i}_bo"]
            X1 = X + attn
            M, ln2c = self._ln(X1, p[f"l{i}_ln2_g"], p[f"l{i}_ln2_b"])
            Hpre = M @ p[f"l{i}_w1"] + p[f"l{i}_b1"]
            Hact = relu(Hpre)
            mlp = Hact @ p[f"l{i}_w2"] + p[f"l{i}_b2"]
            X2 = X1 + mlp
            cache["layers"].append(
                dict(X=X, A=A, ln1=ln1c, Q=Qh, K=Kh, V=Vh, P=P, keep=keep, Pd=Pd, O=O,
                     X1=X1, M=M, ln2=ln2c, Hpre=Hpre, Hact=Hact)
            )
            X = X2
        Y, lnfc = self._ln(X, p["lnf_g"], p["lnf_b"])
        cache["Xf"] = X
        cache["lnf"] = lnfc
        cache["Y"] = Y
        fs = Y[:, lay.future_state_positions]
        fa = Y[:, lay.future_action_positions]
        cache["fs_in"] = fs
        cache["fa_in"] = fa
        pred_s = fs @ p["head_s"] + p["head_s_b"]
        pred_a = fa @ p["head_a"] + p["head_a_b"]
        return pred_s, pred_a, cache

    # ---------------- backward ----------------

    def _ln_backward(self, dy, g, cache):
        xhat, inv = cache
        dxhat = dy * g
        dg = (dy * xhat).sum(axis=(0, 1))
        db = dy.sum(axis=(0, 1))
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv
        return dx, dg, db

    def backward(self, cache, d_pred_s, d_pred_a):
        """Gradients of a scalar loss w.r.t. every parameter, given the
        loss gradient at the two heads."""
        p = self.params
        lay = self.layout
        B, L, D = cache["B"], self.layout.length, self.D
        g = {k: np.zeros_like(v) for k, v in p.items()}

        d_pred_s = d_pred_s.astype(self.dtype)
        d_pred_a = d_pred_a.astype(self.dtype)
        g["head_s"] = _wgrad(cache["fs_in"], d_pred_s)
        g["head_s_b"] = d_pred_s.sum(axis=(0, 1))
        g["head_a"] = _wgrad(cache["fa_in"], d_pred_a)
        g["head_a_b"] = d_pred_a.sum(axis=(0, 1))
        dY = np.zeros((B, L, D), dtype=self.dtype)
        dY[:, lay.future_state_positions] = d_pred_s @ p["head_s"].T
        dY[:, lay.future_action_positions] += d_pred_a @ p["head_a"].T
        dX, g["lnf_g"], g["lnf_b"] = self._ln_backward(dY, p["lnf_g"], cache["lnf"])

        inv_sqrt = float(1.0 / np.sqrt(self.Dh))
        for i in reversed(range(self.n_layers)):
            c = cache["layers"][i]
            # mlp block
            dmlp = dX
            g[f"l{i}_b2"] = dmlp.sum(axis=(0, 1))
            g[f"l{i}_w2"] = _wgrad(c["Hact"], dmlp)
            dHact = dmlp @ p[f"l{i}_w2"].T
            dHpre = dHact * relu_grad(c["Hpre"])
            g[f"l{i}_b1"] = dHpre.sum(axis=(0, 1))
            g[f"l{i}_w1"] = _wgrad(c["M"], dHpre)
            dM = dHpre @ p[f"l{i}_w1"].T
            dX1, g[f"l{i}_ln2_g"], g[f"l{i}_ln2_b"] = self._ln_backward(dM, p[f"l{i}_ln2_g"], c["ln2"])
            dX1 = dX1 + dX  # residual
            # attention block
            dattn = dX1
            g[f"l{i}_bo"] = dattn.sum(axis=(0, 1))
            g[f"l{i}_wo"] = _wgrad(c["O"], dattn)
            dO = dattn @ p[f"l{i}_wo"].T
            dOh = dO.reshape(B, L, self.heads, self.Dh).transpose(0, 2, 1, 3)
            dPd = dOh @ c["V"].transpose(0, 1, 3, 2)
            dV = c["Pd"].transpose(0, 1, 3, 2) @ dOh
            dP = dPd * c["keep"] if c["keep"] is not None else dPd
            dS = c["P"] * (dP - (dP * c["P"]).sum(axis=-1, keepdims=True))
            dQ = dS @ c["K"] * inv_sqrt
            dK = dS.transpose(0, 1, 3, 2) @ c["Q"] * inv_sqrt
            dQf = dQ.transpose(0, 2, 1, 3).reshape(B, L, D)
            dKf = dK.transpose(0, 2, 1, 3).reshape(B, L, D)
            dVf = dV.transpose(0, 2, 1, 3).reshape(B, L, D)
            g[f"l{i}_bq"] = dQf.sum(axis=(0, 1))
            g[f"l{i}_bk"] = dKf.sum(axis=(0, 1))
            g[f"l{i}_bv"] = dVf.sum(axis=(0, 1))
            A = c["A"]
            g[f"l{i}_wq"] = _wgrad(A, dQf)
            g[f"l{i}_wk"] = _wgrad(A, dKf)
            g[f"l{i}_wv"] = _wgrad(A, dVf)
            dA = dQf @ p[f"l{i}_wq"].T + dKf @ p[f"l{i}_wk"].T + dVf @ p[f"l{i}_wv"].T
            dXa, g[f"l{i}_ln1_g"], g[f"l{i}_ln1_b"] = self._ln_backward(dA, p[f"l{i}_ln1_g"], c["ln1"])
            dX = dX1 + dXa

        # embeddings
        g["pos"] = dX.sum(axis=0)
        dS_tok = dX[:, lay.state_positions]
        dA_tok = dX[:, lay.action_positions]
        g["embed_s"] = _wgrad(cache["states"], dS_tok)
        g["embed_s_b"] = dS_tok.sum(axis=(0, 1))
        if self.da > 0:
            g["embed_a"] = _wgrad(cache["acts"], dA_tok)
        g["embed_a_b"] = dA_tok.sum(axis=(0, 1))
        ne = np.zeros_like(p["noise_emb"])
        hist_contrib = dS_tok[:, : lay.history + 1].sum(axis=(0, 1)) + dA_tok[:, : lay.history].sum(axis=(0, 1))
        ne[0] += hist_contrib
        np.add.at(ne, cache["ks"], dS_tok[:, lay.history + 1 :].sum(axis=1))
        np.add.at(ne, cache["ka"], dA_tok[:, lay.history :].sum(axis=1))
        g["noise_emb"] = ne
        return g


class AdamOptimizer:
    """Adam with bias correction and global-norm gradient clipping."""

    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8, clip=1.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.t = 0
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        if self.clip and self.clip > 0:
            total = np.sqrt(sum(float(np.sum(gr.astype(np.float64) ** 2)) for gr in grads.values()))
            scale = min(1.0, self.clip / (total + 1e-12))
        else:
            scale = 1.0
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, gr in grads.items():
            gr = gr.astype(np.float64) * scale
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gr
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gr * gr
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params[k] = (params[k].astype(np.float64) - update).astype(params[k].dtype)
