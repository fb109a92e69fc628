"""Exact t-SNE (no tree approximations) for fidelity visualization.

Per-point Gaussian bandwidths are found by binary search on the conditional
entropy, the joint P is symmetrized, and the 2-D embedding is optimized by
momentum gradient descent with early exaggeration and adaptive per-coordinate
gains. Fixed seeds give bit-identical embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericDegeneracyError
from ..nn.params import make_rng

_EPS = np.finfo(np.float64).eps


@dataclass
class TsneResult:
    coords: np.ndarray
    kl_initial: float
    kl_final: float


def _conditional_probabilities(sq_dists: np.ndarray, perplexity: float,
                               tol: float = 1e-5, max_iter: int = 64) -> np.ndarray:
    """Row-stochastic conditional P matrix matching log(perplexity) entropy."""
    n = sq_dists.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        d = np.delete(sq_dists[i], i)
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        row = None
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            total = w.sum()
            if total <= 0:
                entropy = -np.inf
                row = np.full(d.size, 1.0 / d.size)
            else:
                row = w / total
                entropy = np.log(total) + beta * float(np.dot(d, row))
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else 0.5 * (beta + beta_max)
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else 0.5 * (beta + beta_min)
        else:
            raise NumericDegeneracyError(
                f"perplexity search failed for point {i} "
                "(duplicate-heavy or degenerate distances)"
            )
        p[i, np.arange(n) != i] = row
    return p


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def run_tsne(points, perplexity: float = 30.0, iters: int = 500, seed: int = 0,
             learning_rate: float = 200.0, early_exaggeration: float = 12.0,
             exaggeration_iters: int = 100) -> TsneResult:
    """Embed (N, D) points into 2-D. Requires N >= 4.

    Early exaggeration multiplies P for the first ``exaggeration_iters``
    iterations; momentum steps up from 0.5 to 0.8 at the same point.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = x.shape[0]
    if n < 4:
        raise ValueError(f"t-SNE needs at least 4 points, got {n}")

    sq = np.sum(x * x, axis=1)
    dists = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    cond = _conditional_probabilities(dists, perplexity)
    p = (cond + cond.T) / (2.0 * n)

    rng = make_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)

    def q_matrix(coords):
        s = np.sum(coords * coords, axis=1)
        num = 1.0 / (1.0 + np.maximum(s[:, None] + s[None, :] - 2.0 * (coords @ coords.T), 0.0))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), _EPS)
        return q, num

    q0, _ = q_matrix(y)
    kl_initial = _kl_divergence(p, q0)

    for it in range(iters):
        exaggerating = it < exaggeration_iters
        p_eff = p * early_exaggeration if exaggerating else p
        momentum = 0.5 if exaggerating else 0.8
        q, num = q_matrix(y)
        pq = (p_eff - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)

        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

    q_final, _ = q_matrix(y)
    kl_final = _kl_divergence(p, q_final)
    return TsneResult(coords=y, kl_initial=kl_initial, kl_final=kl_final)


def tsne(points, perplexity: float = 30.0, iters: int = 500, seed: int = 0) -> np.ndarray:
    """Embedding coordinates only; see run_tsne for the full result."""
    return run_tsne(points, perplexity=perplexity, iters=iters, seed=seed).coords
