"""Denoising diffusion for segment rows.

Forward process: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. A small stack
of non-causal dilated convolutions with sinusoidal step embeddings predicts
eps from (x_t, t); sampling runs the standard ancestral reverse chain from
pure noise down to x_0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from ..nn.optim import Adam
from ..nn.ops import (
    conv1d,
    conv1d_backward,
    dense,
    dense_backward,
    mse_loss,
    relu,
    relu_backward,
)
from ..nn.params import ModelParams, make_rng, uniform_init
from ..segment import SegmentMatrix


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule. The default endpoint keeps abar_T below 0.05 so
    the terminal state is close to pure noise at T = 50."""

    steps: int = 50
    beta_min: float = 1e-4
    beta_max: float = 0.12

    def __post_init__(self):
        betas = self.betas
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if self.alpha_bars[-1] >= 0.05:
            raise ValueError(
                f"terminal alpha_bar {self.alpha_bars[-1]:.4f} >= 0.05; "
                "increase steps or beta_max"
            )

    @property
    def betas(self) -> np.ndarray:
        return np.linspace(self.beta_min, self.beta_max, self.steps)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)


@dataclass(frozen=True)
class DenoiserConfig:
    channels: int = 32
    layers: int = 4
    kernel: int = 3
    embed_dim: int = 64
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.channels < 1:
            raise ValueError("layers and channels must be >= 1")
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even")

    @property
    def dilations(self) -> list[int]:
        return [2**i for i in range(self.layers)]


def step_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer diffusion steps, shape (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half) / half)
    angles = t * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def build(config: DenoiserConfig) -> ModelParams:
    c, k, e = config.channels, config.kernel, config.embed_dim
    shapes = [("in.w", (c, 1, k), k), ("in.b", (c,), 0)]
    for i in range(config.layers):
        shapes += [
            (f"layer{i}.conv.w", (c, c, k), c * k),
            (f"layer{i}.conv.b", (c,), 0),
            (f"layer{i}.emb.w", (c, e), e),
            (f"layer{i}.emb.b", (c,), 0),
        ]
    shapes += [
        ("out1.w", (c, c, 1), c),
        ("out1.b", (c,), 0),
        ("out2.w", (1, c, 1), c),
        ("out2.b", (1,), 0),
    ]
    rng = make_rng(config.seed)
    params = ModelParams()
    for name, shape, fan_in in sorted(shapes):
        params.add(name, np.zeros(shape) if fan_in == 0 else uniform_init(rng, shape, fan_in))
    return params


def denoiser_forward(params: ModelParams, x_t: np.ndarray, t: np.ndarray,
                     config: DenoiserConfig):
    """Predict eps from noisy rows. x_t: (B, T) raw rows, t: (B,) int steps."""
    emb = step_embedding(t, config.embed_dim)
    h, c_in = conv1d(x_t[:, None, :], params["in.w"], params["in.b"], mode="same")
    layer_caches = []
    for i, dilation in enumerate(config.dilations):
        conv_out, c_conv = conv1d(h, params[f"layer{i}.conv.w"], params[f"layer{i}.conv.b"],
                                  dilation, mode="same")
        cond, c_emb = dense(emb, params[f"layer{i}.emb.w"], params[f"layer{i}.emb.b"])
        pre = conv_out + cond[:, :, None]
        act, m = relu(pre)
        h = h + act
        layer_caches.append((c_conv, c_emb, m))
    u, m_out = relu(h)
    v, c_o1 = conv1d(u, params["out1.w"], params["out1.b"])
    w, m_o2 = relu(v)
    eps_hat, c_o2 = conv1d(w, params["out2.w"], params["out2.b"])
    return eps_hat[:, 0, :], (c_in, layer_caches, m_out, c_o1, m_o2, c_o2, emb)


def denoiser_backward(params: ModelParams, caches, d_eps: np.ndarray,
                      config: DenoiserConfig):
    c_in, layer_caches, m_out, c_o1, m_o2, c_o2, _emb = caches
    grads: dict[str, np.ndarray] = {}
    dw, grads["out2.w"], grads["out2.b"] = conv1d_backward(c_o2, d_eps[:, None, :])
    dv = relu_backward(m_o2, dw)
    du, grads["out1.w"], grads["out1.b"] = conv1d_backward(c_o1, dv)
    dh = relu_backward(m_out, du)
    for i in reversed(range(config.layers)):
        c_conv, c_emb, m = layer_caches[i]
        dact = relu_backward(m, dh)
        dcond = dact.sum(axis=2)
        _demb, grads[f"layer{i}.emb.w"], grads[f"layer{i}.emb.b"] = dense_backward(c_emb, dcond)
        dh_conv, grads[f"layer{i}.conv.w"], grads[f"layer{i}.conv.b"] = conv1d_backward(c_conv, dact)
        dh = dh + dh_conv
    _dx, grads["in.w"], grads["in.b"] = conv1d_backward(c_in, dh)
    return grads


def forward_noise(x0: np.ndarray, t: int, schedule: NoiseSchedule,
                  rng: np.random.Generator):
    """One forward-noising draw: returns (x_t, eps) for step t in 1..T."""
    if not 1 <= t <= schedule.steps:
        raise ValueError(f"step {t} outside 1..{schedule.steps}")
    x0 = np.asarray(x0, dtype=np.float64)
    abar = schedule.alpha_bars[t - 1]
    eps = rng.standard_normal(x0.shape)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps, eps


def loss_and_grads(params: ModelParams, rows: np.ndarray, t: np.ndarray,
                   eps: np.ndarray, schedule: NoiseSchedule, config: DenoiserConfig):
    """eps-prediction objective mean ||eps - eps_hat(x_t, t)||^2."""
    abar = schedule.alpha_bars[t - 1][:, None]
    x_t = np.sqrt(abar) * rows + np.sqrt(1.0 - abar) * eps
    eps_hat, caches = denoiser_forward(params, x_t, t, config)
    loss, d_eps_hat = mse_loss(eps_hat, eps)
    grads = denoiser_backward(params, caches, d_eps_hat, config)
    return loss, grads


def train(config: DenoiserConfig, schedule: NoiseSchedule, corpus: SegmentMatrix):
    """Adam training of the eps-predictor; returns (params, per-epoch loss)."""
    rows = corpus.values
    if rows.shape[0] < 1:
        raise ValueError("corpus is empty")
    params = build(config)
    rng = make_rng(config.seed + 1)
    opt = Adam(params, lr=config.learning_rate)
    curve = []
    n = rows.shape[0]
    for _epoch in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            t = rng.integers(1, schedule.steps + 1, size=idx.size)
            eps = rng.standard_normal((idx.size, rows.shape[1]))
            loss, grads = loss_and_grads(params, rows[idx], t, eps, schedule, config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss diverged to {loss!r}")
            opt.step(params, grads)
            total += loss * idx.size
        curve.append(total / n)
    return params, curve


def sample(params: ModelParams, schedule: NoiseSchedule, n: int,
           rng: np.random.Generator, config: DenoiserConfig,
           length: int = 110) -> SegmentMatrix:
    """Ancestral reverse chain: exactly ``schedule.steps`` denoiser calls per
    batch of rows; final rows are clamped to [-1, 1]."""
    if n == 0:
        return SegmentMatrix(np.empty((0, length)))
    betas = schedule.betas
    alphas = schedule.alphas
    abars = schedule.alpha_bars
    x = rng.standard_normal((n, length))
    for t in range(schedule.steps, 0, -1):
        eps_hat, _ = denoiser_forward(params, x, np.full(n, t), config)
        mean = (x - betas[t - 1] / np.sqrt(1.0 - abars[t - 1]) * eps_hat) / np.sqrt(alphas[t - 1])
        if t > 1:
            abar_prev = abars[t - 2]
            var = (1.0 - abar_prev) / (1.0 - abars[t - 1]) * betas[t - 1]
            x = mean + np.sqrt(var) * rng.standard_normal((n, length))
        else:
            x = mean
    rows = np.clip(x, -1.0, 1.0)
    return SegmentMatrix(rows, [("diffwave", i) for i in range(n)])
