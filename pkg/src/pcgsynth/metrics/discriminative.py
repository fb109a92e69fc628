"""Real-vs-synthetic discriminative score.

A small recurrent binary classifier is trained to separate real segments
(label 1) from generated ones (label 0); its held-out accuracy is the score.
Accuracy near 0.5 means the classifier cannot tell the two apart, i.e. the
synthetic data is faithful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError
from ..nn.optim import Adam
from ..nn.ops import bce_with_logits, dense, dense_backward, lstm_step, lstm_step_backward
from ..nn.params import ModelParams, make_rng, uniform_init


@dataclass(frozen=True)
class DiscriminativeConfig:
    hidden: int = 20
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 50
    holdout_fraction: float = 0.2


def _build(cfg: DiscriminativeConfig, rng) -> ModelParams:
    h = cfg.hidden
    params = ModelParams()
    params.add("head.b", np.zeros(1))
    params.add("head.w", uniform_init(rng, (1, h), h))
    params.add("lstm.b", np.zeros(4 * h))
    params.add("lstm.wh", uniform_init(rng, (4 * h, h), h + 1))
    params.add("lstm.wx", uniform_init(rng, (4 * h, 1), h + 1))
    return params


def _forward(params: ModelParams, x: np.ndarray):
    """x: (B, T) scalar sequences -> (logits (B,), caches)."""
    b, t = x.shape
    hidden = params["head.w"].shape[1]
    h = np.zeros((b, hidden))
    c = np.zeros((b, hidden))
    caches = []
    for step in range(t):
        h, c, cache = lstm_step(x[:, step : step + 1], h, c,
                                params["lstm.wx"], params["lstm.wh"], params["lstm.b"])
        caches.append(cache)
    logits, head_cache = dense(h, params["head.w"], params["head.b"])
    return logits[:, 0], (caches, head_cache)


def _loss_and_grads(params: ModelParams, x: np.ndarray, labels: np.ndarray):
    logits, (caches, head_cache) = _forward(params, x)
    loss, dlogits = bce_with_logits(logits, labels)
    dh, dw_head, db_head = dense_backward(head_cache, dlogits[:, None])
    grads = {
        "head.w": dw_head,
        "head.b": db_head,
        "lstm.wx": np.zeros_like(params["lstm.wx"]),
        "lstm.wh": np.zeros_like(params["lstm.wh"]),
        "lstm.b": np.zeros_like(params["lstm.b"]),
    }
    dc = None
    for cache in reversed(caches):
        _dx, dh, dc, dwx, dwh, db = lstm_step_backward(cache, dh, dc)
        grads["lstm.wx"] += dwx
        grads["lstm.wh"] += dwh
        grads["lstm.b"] += db
    return loss, grads


def discriminative_score(real_rows: np.ndarray, synth_rows: np.ndarray,
                         cfg: DiscriminativeConfig = DiscriminativeConfig(),
                         seed: int = 0) -> float:
    """Train the classifier on a balanced shuffled mix and return held-out
    accuracy. The larger class is subsampled so both sides contribute equally."""
    real = np.atleast_2d(np.asarray(real_rows, dtype=np.float64))
    synth = np.atleast_2d(np.asarray(synth_rows, dtype=np.float64))
    n = min(real.shape[0], synth.shape[0])
    if n < 10:
        raise InsufficientDataError(f"need at least 10 rows per class, got {n}")
    rng = make_rng(seed)
    real = real[rng.permutation(real.shape[0])[:n]]
    synth = synth[rng.permutation(synth.shape[0])[:n]]
    x = np.vstack([real, synth])
    y = np.concatenate([np.ones(n), np.zeros(n)])
    order = rng.permutation(2 * n)
    x, y = x[order], y[order]

    n_test = max(1, int(round(cfg.holdout_fraction * 2 * n)))
    x_test, y_test = x[-n_test:], y[-n_test:]
    x_train, y_train = x[:-n_test], y[:-n_test]

    params = _build(cfg, rng)
    opt = Adam(params, lr=cfg.learning_rate)
    n_train = x_train.shape[0]
    for _epoch in range(cfg.epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _loss, grads = _loss_and_grads(params, x_train[idx], y_train[idx])
            opt.step(params, grads)

    logits, _ = _forward(params, x_test)
    predicted = (logits > 0.0).astype(np.float64)
    return float(np.mean(predicted == y_test))
