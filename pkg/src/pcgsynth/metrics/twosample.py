"""Two-sample distribution statistics: kernel MMD^2 and histogram JSD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MmdConfig:
    """RBF-kernel MMD^2 settings. bandwidth is either the string
    'median_heuristic' or a fixed positive sigma."""

    bandwidth: object = "median_heuristic"

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median_heuristic":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not float(self.bandwidth) > 0:
            raise ValueError("fixed bandwidth must be positive")


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)
    bb = np.sum(b * b, axis=1)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def median_heuristic_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise Euclidean distance over the pooled sample."""
    pooled = np.vstack([x, y])
    d = _sq_dists(pooled, pooled)
    tri = np.sqrt(d[np.triu_indices(pooled.shape[0], k=1)])
    med = float(np.median(tri)) if tri.size else 0.0
    return med if med > 0 else 1.0


def mmd2(x_set, y_set, config: MmdConfig = MmdConfig()) -> float:
    """Biased (V-statistic) squared maximum mean discrepancy.

    MMD^2 = mean k(x,x') + mean k(y,y') - 2 mean k(x,y) with the Gaussian
    kernel k(u,v) = exp(-||u-v||^2 / (2 sigma^2)); this matches the squared
    distance between the two kernel mean embeddings.
    """
    x = np.atleast_2d(np.asarray(x_set, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y_set, dtype=np.float64))
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    if config.bandwidth == "median_heuristic":
        sigma = median_heuristic_bandwidth(x, y)
    else:
        sigma = float(config.bandwidth)
    scale = -0.5 / (sigma * sigma)
    kxx = np.exp(scale * _sq_dists(x, x))
    kyy = np.exp(scale * _sq_dists(y, y))
    kxy = np.exp(scale * _sq_dists(x, y))
    return float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean())


def jsd_from_masses(p_mass, q_mass) -> float:
    """Jensen-Shannon divergence of two probability vectors, base-2 logs."""
    p = np.asarray(p_mass, dtype=np.float64)
    q = np.asarray(q_mass, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("mass vectors must share the same bins")
    if abs(p.sum() - 1.0) > 1e-12 or abs(q.sum() - 1.0) > 1e-12:
        raise ValueError("masses must each sum to 1")
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def jsd(x_values, y_values, bins: int = 50) -> float:
    """JSD between two empirical amplitude distributions.

    Both samples are histogrammed on shared equal-width bins spanning the
    pooled range; with base-2 logs the result lies in [0, 1].
    """
    x = np.asarray(x_values, dtype=np.float64).ravel()
    y = np.asarray(y_values, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("both value sets must be nonempty")
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if lo == hi:
        return 0.0  # everything concentrates in one shared bin
    edges = np.linspace(lo, hi, bins + 1)
    p, _ = np.histogram(x, bins=edges)
    q, _ = np.histogram(y, bins=edges)
    return jsd_from_masses(p / x.size, q / y.size)
