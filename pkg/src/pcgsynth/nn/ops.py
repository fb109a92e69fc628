"""Layer primitives with explicit forward/backward pairs.

Every forward returns ``(out, cache)`` and the matching backward consumes
``(cache, grad_out)`` and returns input/parameter gradients. All math is in
float64; reverse-mode composition is done by the model classes, not here.

Shape conventions:
    convolutions  x: (B, C, T)   weights: (C_out, C_in, K)
    dense         x: (..., n_in) weights: (n_out, n_in)
    lstm          x: (B, n_in)   h, c: (B, H)   wx: (4H, n_in)  wh: (4H, H)
"""

from __future__ import annotations

import numpy as np


def _shifted(x: np.ndarray, off: int) -> np.ndarray:
    """out[..., t] = x[..., t + off], zero-filled outside the valid range."""
    if off == 0:
        return x
    out = np.zeros_like(x)
    if off > 0:
        out[..., :-off] = x[..., off:]
    else:
        out[..., -off:] = x[..., :off]
    return out


def _conv_offsets(kernel: int, dilation: int, mode: str) -> list[int]:
    if mode == "causal":
        # tap k=K-1 reads the current sample, k=0 reaches back d*(K-1)
        return [-dilation * (kernel - 1 - k) for k in range(kernel)]
    if mode == "same":
        if kernel % 2 == 0:
            raise ValueError("'same' convolution requires an odd kernel")
        half = (kernel - 1) // 2
        return [dilation * (k - half) for k in range(kernel)]
    raise ValueError(f"unknown conv mode {mode!r}")


def conv1d(x, w, b, dilation=1, mode="causal"):
    """Dilated 1-D convolution over (B, C_in, T) -> (B, C_out, T).

    'causal' left-pads with zeros so out[t] depends only on x[t - d*(K-1) .. t];
    'same' centers the kernel (non-causal) with zero padding at both ends.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv1d shape mismatch: x {x.shape}, w {w.shape}")
    offsets = _conv_offsets(w.shape[2], dilation, mode)
    y = np.zeros((x.shape[0], w.shape[0], x.shape[2]))
    for k, off in enumerate(offsets):
        xs = _shifted(x, off)
        y += np.moveaxis(np.tensordot(w[:, :, k], xs, axes=(1, 1)), 0, 1)
    y += b[None, :, None]
    return y, (x, w, offsets)


def conv1d_backward(cache, dy):
    x, w, offsets = cache
    dw = np.empty_like(w)
    dx = np.zeros_like(x)
    for k, off in enumerate(offsets):
        xs = _shifted(x, off)
        dw[:, :, k] = np.tensordot(dy, xs, axes=([0, 2], [0, 2]))
        dys = _shifted(dy, -off)
        dx += np.moveaxis(np.tensordot(w[:, :, k], dys, axes=(0, 1)), 0, 1)
    db = dy.sum(axis=(0, 2))
    return dx, dw, db


def dense(x, w, b):
    """Affine map on the trailing axis: y = x @ w.T + b."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"dense shape mismatch: x {x.shape}, w {w.shape}")
    return x @ w.T + b, (x, w)


def dense_backward(cache, dy):
    x, w = cache
    lead = tuple(range(x.ndim - 1))
    dw = np.tensordot(dy, x, axes=(lead, lead))
    db = dy.sum(axis=lead)
    dx = dy @ w
    return dx, dw, db


def relu(x):
    return np.maximum(x, 0.0), (x > 0)


def relu_backward(cache, dy):
    return dy * cache


def tanh(x):
    t = np.tanh(x)
    return t, t


def tanh_backward(cache, dy):
    return dy * (1.0 - cache * cache)


def sigmoid(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s, s


def sigmoid_backward(cache, dy):
    return dy * cache * (1.0 - cache)


def gated(a, b):
    """Gated activation tanh(a) * sigmoid(b), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"gated shape mismatch: {a.shape} vs {b.shape}")
    ta = np.tanh(a)
    sb = 1.0 / (1.0 + np.exp(-b))
    return ta * sb, (ta, sb)


def gated_backward(cache, dy):
    ta, sb = cache
    da = dy * sb * (1.0 - ta * ta)
    db = dy * ta * sb * (1.0 - sb)
    return da, db


# LSTM gate layout along the 4H axis: input, forget, candidate, output.


def lstm_step(x, h, c, wx, wh, b):
    """One LSTM cell step. Returns (h_next, c_next, cache)."""
    hidden = wh.shape[1]
    if wx.shape[0] != 4 * hidden or wh.shape[0] != 4 * hidden:
        raise ValueError(f"lstm weight shapes disagree: wx {wx.shape}, wh {wh.shape}")
    gates = x @ wx.T + h @ wh.T + b
    i = 1.0 / (1.0 + np.exp(-gates[:, :hidden]))
    f = 1.0 / (1.0 + np.exp(-gates[:, hidden : 2 * hidden]))
    g = np.tanh(gates[:, 2 * hidden : 3 * hidden])
    o = 1.0 / (1.0 + np.exp(-gates[:, 3 * hidden :]))
    c_next = f * c + i * g
    tc = np.tanh(c_next)
    h_next = o * tc
    return h_next, c_next, (x, h, c, i, f, g, o, tc, wx, wh)


def lstm_step_backward(cache, dh_next, dc_next):
    """Backward through one cell step.

    Returns (dx, dh_prev, dc_prev, dwx, dwh, db); dc_next may be None when no
    gradient flows in through the cell state.
    """
    x, h, c, i, f, g, o, tc, wx, wh = cache
    if dc_next is None:
        dc_next = np.zeros_like(tc)
    dc_total = dc_next + dh_next * o * (1.0 - tc * tc)
    do = dh_next * tc
    di = dc_total * g
    df = dc_total * c
    dg = dc_total * i
    dc_prev = dc_total * f
    da = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    dwx = da.T @ x
    dwh = da.T @ h
    db = da.sum(axis=0)
    dx = da @ wx
    dh_prev = da @ wh
    return dx, dh_prev, dc_prev, dwx, dwh, db


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy over rows of (N, Q) logits vs integer targets (N,).

    Returns (loss, dlogits); the gradient already includes the 1/N factor.
    """
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), targets]))
    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(n), targets] -= 1.0
    dlogits /= n
    return loss, dlogits


def mse_loss(pred, target):
    """Mean squared error; returns (loss, dpred)."""
    diff = np.asarray(pred, dtype=np.float64) - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def bce_with_logits(logits, labels):
    """Binary cross-entropy on raw logits; returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    # log(1 + exp(-|z|)) form avoids overflow on either sign
    loss = float(np.mean(np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))))
    p = 1.0 / (1.0 + np.exp(-logits))
    return loss, (p - labels) / logits.size
