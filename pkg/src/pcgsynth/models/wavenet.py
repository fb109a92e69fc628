"""Autoregressive model: stacked gated causal convolutions with exponentially
growing dilations, residual/skip paths, and a categorical (mu-law bin) output.

Training is teacher-forced next-sample cross-entropy over segment rows;
forecasting rolls the model out autoregressively, feeding back the decoded
prediction one sample at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from ..metrics.forecast import ForecastMetrics, acd, mae, mse, smape
from ..nn.mulaw import mu_law_decode, mu_law_encode
from ..nn.optim import Adam
from ..nn.ops import (
    conv1d,
    conv1d_backward,
    dense,
    gated,
    gated_backward,
    relu,
    relu_backward,
    softmax,
    softmax_cross_entropy,
)
from ..nn.params import ModelParams, make_rng, uniform_init
from ..segment import SegmentMatrix


@dataclass(frozen=True)
class WaveNetConfig:
    layers: int = 7
    kernel: int = 2
    dilation_base: int = 2
    residual_channels: int = 89
    skip_channels: int = 199
    quantization_levels: int = 256
    horizon: int = 14
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.receptive_field < self.horizon:
            raise ValueError(
                f"receptive field {self.receptive_field} is smaller than the "
                f"forecast horizon {self.horizon}"
            )

    @property
    def dilations(self) -> list[int]:
        return [self.dilation_base**i for i in range(self.layers)]

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel - 1) * sum(self.dilations)


def parameter_count(config: WaveNetConfig) -> int:
    """Closed-form size of the parameter set built by ``build``."""
    r, s, q, k = (config.residual_channels, config.skip_channels,
                  config.quantization_levels, config.kernel)
    per_block = 2 * (r * r * k + r) + (r * r + r) + (s * r + s)
    head = s * s + s + q * s + q
    return (r + r) + config.layers * per_block + head


def build(config: WaveNetConfig) -> ModelParams:
    """Initialize all parameters (uniform +-1/sqrt(fan_in) weights, zero biases),
    drawing in lexicographic name order for reproducibility."""
    r, s, q, k = (config.residual_channels, config.skip_channels,
                  config.quantization_levels, config.kernel)
    shapes: list[tuple[str, tuple, int]] = [("input.w", (r, 1, 1), 1), ("input.b", (r,), 0)]
    for i in range(config.layers):
        prefix = f"block{i:02d}"
        shapes += [
            (f"{prefix}.filter.w", (r, r, k), r * k),
            (f"{prefix}.filter.b", (r,), 0),
            (f"{prefix}.gate.w", (r, r, k), r * k),
            (f"{prefix}.gate.b", (r,), 0),
            (f"{prefix}.res.w", (r, r, 1), r),
            (f"{prefix}.res.b", (r,), 0),
            (f"{prefix}.skip.w", (s, r, 1), r),
            (f"{prefix}.skip.b", (s,), 0),
        ]
    shapes += [
        ("head.w1", (s, s, 1), s),
        ("head.b1", (s,), 0),
        ("head.w2", (q, s, 1), s),
        ("head.b2", (q,), 0),
    ]
    rng = make_rng(config.seed)
    params = ModelParams()
    for name, shape, fan_in in sorted(shapes):
        if fan_in == 0:
            params.add(name, np.zeros(shape))
        else:
            params.add(name, uniform_init(rng, shape, fan_in))
    return params


def _forward(params: ModelParams, x: np.ndarray, config: WaveNetConfig,
             last_only: bool = False):
    """Full network on (B, 1, T) inputs.

    Returns (logits, caches); with ``last_only`` the output head is evaluated
    at the final time step only (logits shape (B, Q)) and no caches are kept.
    """
    h, c_in = conv1d(x, params["input.w"], params["input.b"])
    skip_sum = None
    block_caches = []
    for i, dilation in enumerate(config.dilations):
        prefix = f"block{i:02d}"
        f, cf = conv1d(h, params[f"{prefix}.filter.w"], params[f"{prefix}.filter.b"], dilation)
        g, cg = conv1d(h, params[f"{prefix}.gate.w"], params[f"{prefix}.gate.b"], dilation)
        z, cz = gated(f, g)
        s_out, cs = conv1d(z, params[f"{prefix}.skip.w"], params[f"{prefix}.skip.b"])
        r_out, cr = conv1d(z, params[f"{prefix}.res.w"], params[f"{prefix}.res.b"])
        skip_sum = s_out if skip_sum is None else skip_sum + s_out
        h = h + r_out
        block_caches.append((cf, cg, cz, cs, cr))

    if last_only:
        tail = skip_sum[:, :, -1]
        u1, _ = relu(tail)
        v1, _ = dense(u1, params["head.w1"][:, :, 0], params["head.b1"])
        u2, _ = relu(v1)
        logits, _ = dense(u2, params["head.w2"][:, :, 0], params["head.b2"])
        return logits, None

    u1, m1 = relu(skip_sum)
    v1, ch1 = conv1d(u1, params["head.w1"], params["head.b1"])
    u2, m2 = relu(v1)
    logits, ch2 = conv1d(u2, params["head.w2"], params["head.b2"])
    return logits, (c_in, block_caches, m1, ch1, m2, ch2)


def _backward(params: ModelParams, caches, dlogits: np.ndarray, config: WaveNetConfig):
    c_in, block_caches, m1, ch1, m2, ch2 = caches
    grads: dict[str, np.ndarray] = {}

    du2, grads["head.w2"], grads["head.b2"] = conv1d_backward(ch2, dlogits)
    dv1 = relu_backward(m2, du2)
    du1, grads["head.w1"], grads["head.b1"] = conv1d_backward(ch1, dv1)
    dskip = relu_backward(m1, du1)

    # only the skip paths feed the head; the final block's residual output is unused
    dh = None
    for i in reversed(range(config.layers)):
        prefix = f"block{i:02d}"
        cf, cg, cz, cs, cr = block_caches[i]
        dz_skip, grads[f"{prefix}.skip.w"], grads[f"{prefix}.skip.b"] = conv1d_backward(cs, dskip)
        if dh is None:
            dz = dz_skip
            grads[f"{prefix}.res.w"] = np.zeros_like(params[f"{prefix}.res.w"])
            grads[f"{prefix}.res.b"] = np.zeros_like(params[f"{prefix}.res.b"])
            dh = np.zeros((dskip.shape[0], params["input.w"].shape[0], dskip.shape[2]))
        else:
            dz_res, grads[f"{prefix}.res.w"], grads[f"{prefix}.res.b"] = conv1d_backward(cr, dh)
            dz = dz_skip + dz_res
        df, dg = gated_backward(cz, dz)
        dh_f, grads[f"{prefix}.filter.w"], grads[f"{prefix}.filter.b"] = conv1d_backward(cf, df)
        dh_g, grads[f"{prefix}.gate.w"], grads[f"{prefix}.gate.b"] = conv1d_backward(cg, dg)
        dh = dh + dh_f + dh_g

    _dx, grads["input.w"], grads["input.b"] = conv1d_backward(c_in, dh)
    return grads


def loss_and_grads(params: ModelParams, rows: np.ndarray, config: WaveNetConfig):
    """Teacher-forced next-bin cross-entropy over (B, T) raw rows."""
    q = config.quantization_levels
    bins = mu_law_encode(rows, q)
    x = mu_law_decode(bins, q)[:, None, :]
    logits, caches = _forward(params, x, config)
    b, _, t = logits.shape
    flat = np.ascontiguousarray(logits[:, :, : t - 1].transpose(0, 2, 1)).reshape(-1, q)
    targets = bins[:, 1:].reshape(-1)
    loss, dflat = softmax_cross_entropy(flat, targets)
    dlogits = np.zeros_like(logits)
    dlogits[:, :, : t - 1] = dflat.reshape(b, t - 1, q).transpose(0, 2, 1)
    grads = _backward(params, caches, dlogits, config)
    return loss, grads


def train(params: ModelParams, corpus: SegmentMatrix, config: WaveNetConfig):
    """Adam training over segment rows; returns (params, per-epoch mean loss)."""
    rows = corpus.values
    if rows.shape[0] < 1 or rows.shape[1] < 2:
        raise ValueError("corpus must have at least one row of length >= 2")
    rng = make_rng(config.seed + 1)
    opt = Adam(params, lr=config.learning_rate)
    curve = []
    n = rows.shape[0]
    for _epoch in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = loss_and_grads(params, rows[idx], config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss diverged to {loss!r}")
            opt.step(params, grads)
            total += loss * idx.size
        curve.append(total / n)
    return params, curve


def forecast(params: ModelParams, history, horizon: int, config: WaveNetConfig,
             mode: str = "greedy", rng: np.random.Generator | None = None) -> np.ndarray:
    """Roll out ``horizon`` samples past the end of ``history``."""
    out = forecast_batch(params, np.asarray(history, dtype=np.float64)[None, :],
                         horizon, config, mode=mode, rng=rng)
    return out[0]


def forecast_batch(params: ModelParams, histories: np.ndarray, horizon: int,
                   config: WaveNetConfig, mode: str = "greedy",
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Autoregressive rollout for a batch of histories (B, L) -> (B, horizon).

    Each emitted sample is the mu-law decode of either the argmax bin (greedy)
    or a draw from the softmax (sample mode, which requires ``rng``).
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown forecast mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    q = config.quantization_levels
    histories = np.atleast_2d(np.asarray(histories, dtype=np.float64))
    if histories.shape[1] < 1:
        raise ValueError("history must contain at least one sample")
    if horizon <= 0:
        return np.empty((histories.shape[0], 0))
    x = mu_law_decode(mu_law_encode(histories, q), q)
    out = np.empty((histories.shape[0], horizon))
    for step in range(horizon):
        logits, _ = _forward(params, x[:, None, :], config, last_only=True)
        if mode == "greedy":
            bins = np.argmax(logits, axis=1)
        else:
            probs = softmax(logits, axis=1)
            u = rng.random(probs.shape[0])
            bins = np.minimum((np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1), q - 1)
        values = mu_law_decode(bins, q)
        out[:, step] = values
        x = np.concatenate([x, values[:, None]], axis=1)
    return out


def evaluate_holdout(params: ModelParams, corpus: SegmentMatrix, config: WaveNetConfig,
                     acd_paths: int = 100, seed: int = 0,
                     chunk_rows: int = 2048) -> ForecastMetrics:
    """Condition on the leading (1 - holdout_fraction) of every row and predict
    the rest in rolling chunks of at most ``horizon`` samples.

    Point metrics come from greedy rollouts; ACD pools ``acd_paths`` sampled
    rollouts per row. Conditioning between chunks uses the true past.
    """
    rows = corpus.values
    n, t = rows.shape
    n_cond = int(round((1.0 - config.holdout_fraction) * t))
    if not 0 < n_cond < t:
        raise ValueError("holdout fraction leaves no conditioning or target samples")
    xq = mu_law_decode(mu_law_encode(rows, config.quantization_levels),
                       config.quantization_levels)
    spans = []
    s = n_cond
    while s < t:
        h = min(config.horizon, t - s)
        spans.append((s, h))
        s += h

    y_true = rows[:, n_cond:]
    y_hat = np.empty_like(y_true)
    for s, h in spans:
        preds = forecast_batch(params, xq[:, :s], h, config, mode="greedy")
        y_hat[:, s - n_cond : s - n_cond + h] = preds

    rng = make_rng(seed + 2)
    m = acd_paths
    paths = np.empty((m, n * (t - n_cond)))
    for s, h in spans:
        hist = np.repeat(xq[:, :s], m, axis=0)  # row i sample j at index i*m + j
        preds = np.empty((n * m, h))
        for start in range(0, n * m, chunk_rows):
            stop = min(start + chunk_rows, n * m)
            preds[start:stop] = forecast_batch(params, hist[start:stop], h, config,
                                               mode="sample", rng=rng)
        block = preds.reshape(n, m, h).transpose(1, 0, 2)  # (m, n, h)
        for k in range(h):
            paths[:, (s - n_cond + k)::(t - n_cond)] = block[:, :, k]
    acd_value = acd(y_true.reshape(-1), paths)

    return ForecastMetrics(
        mae=mae(y_true, y_hat),
        mse=mse(y_true, y_hat),
        smape_percent=smape(y_true, y_hat),
        acd=acd_value,
    )
