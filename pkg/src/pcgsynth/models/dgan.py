"""Dual-generator GAN for segment rows.

An attribute generator (2-layer dense) produces per-row scaling metadata as a
(center, halfwidth) pair; a single-LSTM sequence generator emits the row in
(-1, 1) ten samples per cell, conditioned on that metadata; rows are then
rescaled into [center - halfwidth, center + halfwidth]. One critic scores
(attributes ++ normalized sequence) pairs; training is WGAN with gradient
penalty, alternating one critic update and one joint generator update.

The critic uses tanh activations throughout so the gradient-penalty term
(which needs derivatives of the critic's input gradient) is smooth and can be
verified by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from ..nn.optim import Adam
from ..nn.ops import dense, dense_backward, lstm_step, lstm_step_backward, sigmoid, tanh
from ..nn.params import ModelParams, make_rng, uniform_init
from ..segment import SegmentMatrix


@dataclass(frozen=True)
class DganConfig:
    disc_layers: int = 3
    disc_units: int = 100
    gen_lstm_units: int = 100
    samples_per_cell: int = 10
    seq_len: int = 110
    attr_hidden: int = 100
    noise_dim: int = 32
    lr_gen: float = 1e-4
    lr_disc: float = 1e-4
    steps: int = 10000
    batch: int = 1000
    gradient_penalty_weight: float = 10.0
    record_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.seq_len % self.samples_per_cell != 0:
            raise ValueError("seq_len must be divisible by samples_per_cell")
        if min(self.lr_gen, self.lr_disc) <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def n_cells(self) -> int:
        return self.seq_len // self.samples_per_cell


@dataclass
class DganParams:
    generator: ModelParams
    critic: ModelParams

    def merged(self) -> ModelParams:
        out = ModelParams()
        for name, arr in self.generator.items():
            out.add(name, arr.copy())
        for name, arr in self.critic.items():
            out.add(name, arr.copy())
        return out

    @classmethod
    def from_merged(cls, params: ModelParams) -> "DganParams":
        gen, critic = ModelParams(), ModelParams()
        for name, arr in params.items():
            (critic if name.startswith("critic.") else gen).add(name, arr.copy())
        return cls(gen, critic)


def build(config: DganConfig) -> DganParams:
    rng = make_rng(config.seed)
    h = config.gen_lstm_units
    in_dim = config.noise_dim + 2  # per-cell noise plus (center, halfwidth)
    gen_shapes = [
        ("attr.l1.b", (config.attr_hidden,), 0),
        ("attr.l1.w", (config.attr_hidden, config.noise_dim), config.noise_dim),
        ("attr.l2.b", (2,), 0),
        ("attr.l2.w", (2, config.attr_hidden), config.attr_hidden),
        ("seq.lstm.b", (4 * h,), 0),
        ("seq.lstm.wh", (4 * h, h), in_dim + h),
        ("seq.lstm.wx", (4 * h, in_dim), in_dim + h),
        ("seq.out.b", (config.samples_per_cell,), 0),
        ("seq.out.w", (config.samples_per_cell, h), h),
    ]
    critic_in = 2 + config.seq_len
    critic_shapes = []
    prev = critic_in
    for i in range(config.disc_layers):
        critic_shapes.append((f"critic.l{i + 1}.b", (config.disc_units,), 0))
        critic_shapes.append((f"critic.l{i + 1}.w", (config.disc_units, prev), prev))
        prev = config.disc_units
    critic_shapes.append(("critic.out.b", (1,), 0))
    critic_shapes.append(("critic.out.w", (1, prev), prev))

    def init(shapes):
        params = ModelParams()
        for name, shape, fan_in in sorted(shapes):
            params.add(name, np.zeros(shape) if fan_in == 0 else uniform_init(rng, shape, fan_in))
        return params

    return DganParams(generator=init(gen_shapes), critic=init(critic_shapes))


def row_attributes(rows: np.ndarray) -> np.ndarray:
    """(center, halfwidth) of each row's value range."""
    rmin = rows.min(axis=1)
    rmax = rows.max(axis=1)
    return np.stack([(rmin + rmax) / 2.0, (rmax - rmin) / 2.0], axis=1)


def normalize_rows(rows: np.ndarray, attrs: np.ndarray) -> np.ndarray:
    """Map each row into (-1, 1) using its own (center, halfwidth); constant
    rows (halfwidth 0) map to zeros."""
    half = attrs[:, 1:2]
    centered = rows - attrs[:, 0:1]
    return np.divide(centered, half, out=np.zeros_like(rows), where=half > 0)


def _generator_forward(params: ModelParams, z_attr: np.ndarray, z_seq: np.ndarray,
                       config: DganConfig):
    """Returns (attrs (B,2), seq_norm (B,seq_len), cache)."""
    a1, c_a1 = dense(z_attr, params["attr.l1.w"], params["attr.l1.b"])
    t1, m_a1 = tanh(a1)
    o, c_a2 = dense(t1, params["attr.l2.w"], params["attr.l2.b"])
    mid, m_mid = tanh(o[:, 0:1])
    half, m_half = sigmoid(o[:, 1:2])
    attrs = np.concatenate([mid, half], axis=1)

    b = z_attr.shape[0]
    h = np.zeros((b, config.gen_lstm_units))
    c = np.zeros((b, config.gen_lstm_units))
    cells = []
    chunks = []
    for i in range(config.n_cells):
        x_in = np.concatenate([z_seq[:, i], attrs], axis=1)
        h, c, c_lstm = lstm_step(x_in, h, c, params["seq.lstm.wx"],
                                 params["seq.lstm.wh"], params["seq.lstm.b"])
        pre, c_out = dense(h, params["seq.out.w"], params["seq.out.b"])
        y, m_y = tanh(pre)
        chunks.append(y)
        cells.append((c_lstm, c_out, m_y))
    seq_norm = np.concatenate(chunks, axis=1)
    cache = (c_a1, m_a1, c_a2, m_mid, m_half, cells)
    return attrs, seq_norm, cache


def _generator_backward(params: ModelParams, cache, d_attrs: np.ndarray,
                        d_seq: np.ndarray, config: DganConfig):
    """Gradients of generator parameters given d(attrs) and d(seq_norm)."""
    c_a1, m_a1, c_a2, m_mid, m_half, cells = cache
    spc = config.samples_per_cell
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    d_attrs = d_attrs.copy()

    dh = np.zeros((d_seq.shape[0], config.gen_lstm_units))
    dc = None
    for i in reversed(range(config.n_cells)):
        c_lstm, c_out, m_y = cells[i]
        dy = d_seq[:, i * spc : (i + 1) * spc]
        dpre = dy * (1.0 - m_y * m_y)
        dh_cell, dw_out, db_out = dense_backward(c_out, dpre)
        grads["seq.out.w"] += dw_out
        grads["seq.out.b"] += db_out
        dx, dh, dc, dwx, dwh, db = lstm_step_backward(c_lstm, dh + dh_cell, dc)
        grads["seq.lstm.wx"] += dwx
        grads["seq.lstm.wh"] += dwh
        grads["seq.lstm.b"] += db
        d_attrs += dx[:, config.noise_dim :]

    dmid = d_attrs[:, 0:1] * (1.0 - m_mid * m_mid)
    dhalf = d_attrs[:, 1:2] * m_half * (1.0 - m_half)
    do = np.concatenate([dmid, dhalf], axis=1)
    dt1, dw_a2, db_a2 = dense_backward(c_a2, do)
    grads["attr.l2.w"] += dw_a2
    grads["attr.l2.b"] += db_a2
    da1 = dt1 * (1.0 - m_a1 * m_a1)
    _dz, dw_a1, db_a1 = dense_backward(c_a1, da1)
    grads["attr.l1.w"] += dw_a1
    grads["attr.l1.b"] += db_a1
    return grads


def _critic_forward(params: ModelParams, x: np.ndarray, config: DganConfig):
    """Critic score for (B, 2 + seq_len) inputs; returns (scores (B,), cache)."""
    pre_acts = []
    hs = [x]
    h = x
    for i in range(config.disc_layers):
        a, _ = dense(h, params[f"critic.l{i + 1}.w"], params[f"critic.l{i + 1}.b"])
        h = np.tanh(a)
        pre_acts.append(a)
        hs.append(h)
    y, _ = dense(h, params["critic.out.w"], params["critic.out.b"])
    return y[:, 0], (hs, pre_acts)


def critic_score(params: ModelParams, attrs: np.ndarray, seq_norm: np.ndarray,
                 config: DganConfig) -> np.ndarray:
    scores, _ = _critic_forward(params, np.concatenate([attrs, seq_norm], axis=1), config)
    return scores


def _critic_backward(params: ModelParams, cache, dscores: np.ndarray, config: DganConfig):
    """Plain backprop of sum(dscores * score) through the critic.

    Returns (dx, param grads)."""
    hs, pre_acts = cache
    grads = {}
    dh = dscores[:, None] @ params["critic.out.w"]
    grads["critic.out.w"] = dscores[None, :] @ hs[-1]
    grads["critic.out.b"] = np.array([dscores.sum()])
    for i in reversed(range(config.disc_layers)):
        t = hs[i + 1]
        da = dh * (1.0 - t * t)
        grads[f"critic.l{i + 1}.w"] = da.T @ hs[i]
        grads[f"critic.l{i + 1}.b"] = da.sum(axis=0)
        dh = da @ params[f"critic.l{i + 1}.w"]
    return dh, grads


def _gradient_penalty(params: ModelParams, x_hat: np.ndarray, config: DganConfig):
    """mean((||grad_x critic(x_hat)|| - 1)^2) and its critic-parameter gradients.

    The input gradient g is computed analytically; differentiating the penalty
    in the parameters then requires a second reverse pass over both the
    forward chain and the chain that produced g (double backprop). tanh keeps
    every piece smooth.
    """
    n_layers = config.disc_layers
    ws = [params[f"critic.l{i + 1}.w"] for i in range(n_layers)]
    w_out = params["critic.out.w"]  # (1, units)

    hs = [x_hat]
    ts = []  # tanh(a_l)
    h = x_hat
    for w_l, i in zip(ws, range(n_layers)):
        a, _ = dense(h, w_l, params[f"critic.l{i + 1}.b"])
        h = np.tanh(a)
        ts.append(h)
        hs.append(h)

    # input gradient: backward sweep computing s_l = phi'(a_l) * u_l
    phip = [1.0 - t * t for t in ts]  # tanh'
    ss = [None] * n_layers
    u = np.broadcast_to(w_out, (x_hat.shape[0], w_out.shape[1]))
    for l in reversed(range(n_layers)):
        s = phip[l] * u
        ss[l] = s
        u = s @ ws[l] if l > 0 else s
    g = ss[0] @ ws[0]  # (B, D)

    b = x_hat.shape[0]
    norms = np.sqrt(np.sum(g * g, axis=1) + 1e-12)
    penalty = float(np.mean((norms - 1.0) ** 2))
    r = (2.0 * (norms - 1.0) / (b * norms))[:, None] * g  # d penalty / d g

    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    # reverse pass over the g-chain; a_bar collects d penalty / d a_l
    a_bars = [np.zeros_like(t) for t in ts]
    s_bar = r @ ws[0].T
    grads["critic.l1.w"] += ss[0].T @ r
    for l in range(n_layers):
        u_l = (ss[l + 1] @ ws[l + 1]) if l + 1 < n_layers else np.broadcast_to(
            w_out, (b, w_out.shape[1]))
        # s_l = phi'(a_l) * u_l: phi'' of tanh is -2 t (1 - t^2)
        a_bars[l] += s_bar * u_l * (-2.0 * ts[l] * phip[l])
        u_bar = s_bar * phip[l]
        if l + 1 < n_layers:
            s_bar = u_bar @ ws[l + 1].T
            grads[f"critic.l{l + 2}.w"] += ss[l + 1].T @ u_bar
        else:
            grads["critic.out.w"] += (u_bar * 1.0).sum(axis=0, keepdims=True)
    # reverse pass over the forward chain with the accumulated a_bars
    h_bar = np.zeros_like(hs[-1])
    for l in reversed(range(n_layers)):
        a_bar = a_bars[l] + h_bar * phip[l]
        grads[f"critic.l{l + 1}.w"] += a_bar.T @ hs[l]
        grads[f"critic.l{l + 1}.b"] += a_bar.sum(axis=0)
        h_bar = a_bar @ ws[l]
    return penalty, grads


def critic_loss_and_grads(params: DganParams, real_x: np.ndarray, fake_x: np.ndarray,
                          u: np.ndarray, config: DganConfig):
    """Wasserstein critic loss mean(D(fake)) - mean(D(real)) + lambda * GP."""
    scores_real, cache_real = _critic_forward(params.critic, real_x, config)
    scores_fake, cache_fake = _critic_forward(params.critic, fake_x, config)
    loss = float(np.mean(scores_fake) - np.mean(scores_real))
    _, grads_fake = _critic_backward(params.critic, cache_fake,
                                     np.full(fake_x.shape[0], 1.0 / fake_x.shape[0]),
                                     config)
    _, grads_real = _critic_backward(params.critic, cache_real,
                                     np.full(real_x.shape[0], -1.0 / real_x.shape[0]),
                                     config)
    grads = {name: grads_fake[name] + grads_real[name] for name in grads_fake}
    if config.gradient_penalty_weight > 0:
        x_hat = u * real_x + (1.0 - u) * fake_x
        penalty, gp_grads = _gradient_penalty(params.critic, x_hat, config)
        loss += config.gradient_penalty_weight * penalty
        for name in grads:
            grads[name] = grads[name] + config.gradient_penalty_weight * gp_grads[name]
    return loss, grads


def generator_loss_and_grads(params: DganParams, z_attr: np.ndarray, z_seq: np.ndarray,
                             config: DganConfig):
    """-mean(D(G(z))) through the critic into both generators."""
    attrs, seq_norm, cache = _generator_forward(params.generator, z_attr, z_seq, config)
    x = np.concatenate([attrs, seq_norm], axis=1)
    scores, c_cache = _critic_forward(params.critic, x, config)
    loss = float(-np.mean(scores))
    dx, _ = _critic_backward(params.critic, c_cache,
                             np.full(x.shape[0], -1.0 / x.shape[0]), config)
    grads = _generator_backward(params.generator, cache, dx[:, :2], dx[:, 2:], config)
    return loss, grads


@dataclass
class DganLossRecord:
    step: int
    critic_loss: float
    gen_loss: float
    mean_score_real: float
    mean_score_fake: float


def train(config: DganConfig, corpus: SegmentMatrix):
    """Alternating WGAN-GP training; per step one critic update then one joint
    generator update. Returns (DganParams, [DganLossRecord every record_every])."""
    rows = corpus.values
    if rows.shape[0] < 1:
        raise ValueError("corpus is empty")
    if rows.shape[1] != config.seq_len:
        raise ValueError(f"corpus rows have length {rows.shape[1]}, expected {config.seq_len}")
    params = build(config)
    rng = make_rng(config.seed + 1)
    opt_c = Adam(params.critic, lr=config.lr_disc)
    opt_g = Adam(params.generator, lr=config.lr_gen)
    attrs_real_all = row_attributes(rows)
    norm_all = normalize_rows(rows, attrs_real_all)
    records = []
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, rows.shape[0], size=config.batch)
        real_x = np.concatenate([attrs_real_all[idx], norm_all[idx]], axis=1)

        z_attr = rng.standard_normal((config.batch, config.noise_dim))
        z_seq = rng.standard_normal((config.batch, config.n_cells, config.noise_dim))
        attrs_f, seq_f, _ = _generator_forward(params.generator, z_attr, z_seq, config)
        fake_x = np.concatenate([attrs_f, seq_f], axis=1)
        u = rng.random((config.batch, 1))
        c_loss, c_grads = critic_loss_and_grads(params, real_x, fake_x, u, config)
        if not np.isfinite(c_loss):
            raise TrainingDivergedError(f"critic loss diverged at step {step}")
        opt_c.step(params.critic, c_grads)

        z_attr = rng.standard_normal((config.batch, config.noise_dim))
        z_seq = rng.standard_normal((config.batch, config.n_cells, config.noise_dim))
        g_loss, g_grads = generator_loss_and_grads(params, z_attr, z_seq, config)
        if not np.isfinite(g_loss):
            raise TrainingDivergedError(f"generator loss diverged at step {step}")
        opt_g.step(params.generator, g_grads)

        if step % config.record_every == 0 or step == config.steps:
            s_real = critic_score(params.critic, attrs_real_all[idx], norm_all[idx], config)
            s_fake = critic_score(params.critic, attrs_f, seq_f, config)
            records.append(DganLossRecord(step, c_loss, g_loss,
                                          float(np.mean(s_real)), float(np.mean(s_fake))))
    return params, records


def generate(params: DganParams, n: int, rng: np.random.Generator,
             config: DganConfig) -> SegmentMatrix:
    """Sample n rows; each lies inside its own generated value interval and is
    clipped to [-1, 1] as a safety net for untrained models."""
    if n == 0:
        return SegmentMatrix(np.empty((0, config.seq_len)))
    z_attr = rng.standard_normal((n, config.noise_dim))
    z_seq = rng.standard_normal((n, config.n_cells, config.noise_dim))
    attrs, seq_norm, _ = _generator_forward(params.generator, z_attr, z_seq, config)
    rows = attrs[:, 0:1] + attrs[:, 1:2] * seq_norm
    rows = np.clip(rows, -1.0, 1.0)
    return SegmentMatrix(rows, [("dgan", i) for i in range(n)])
