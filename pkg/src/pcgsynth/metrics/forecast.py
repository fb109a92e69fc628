"""Forecast-quality metrics: MAE, MSE, SMAPE, and quantile-coverage ACD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACD_LEVELS = tuple(np.round(np.arange(1, 10) * 0.1, 1))


@dataclass(frozen=True)
class ForecastMetrics:
    mae: float
    mse: float
    smape_percent: float
    acd: float


def _paired(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size != y_hat.size:
        raise ValueError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ValueError("need at least one observation")
    return y, y_hat


def mae(y, y_hat) -> float:
    """Mean absolute error, (1/n) sum |y_i - yhat_i|."""
    y, y_hat = _paired(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mse(y, y_hat) -> float:
    """Mean squared error, (1/n) sum (y_i - yhat_i)^2."""
    y, y_hat = _paired(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def smape(y, y_hat) -> float:
    """Symmetric MAPE in percent: (100/n) sum |y - yhat| / (0.5(|y| + |yhat|)).

    Terms where both values are exactly zero contribute 0 (continuity at the
    joint-zero case instead of a 0/0 blowup).
    """
    y, y_hat = _paired(y, y_hat)
    denom = 0.5 * (np.abs(y) + np.abs(y_hat))
    num = np.abs(y - y_hat)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(100.0 * np.mean(terms))


def acd(y, sample_paths, levels=ACD_LEVELS) -> float:
    """Absolute coverage difference over Monte Carlo forecast paths.

    For each quantile level q, the empirical coverage c_q is the fraction of
    observations y_i at or below the q-quantile of the m sampled paths at step
    i; the score is mean_q |c_q - q|. 0 means the sampled paths cover the
    observations like draws from the true predictive distribution.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    paths = np.asarray(sample_paths, dtype=np.float64)
    if paths.ndim != 2 or paths.shape[1] != y.size:
        raise ValueError(f"sample_paths must be (m, {y.size}), got {paths.shape}")
    if paths.shape[0] < 10:
        raise ValueError("need at least 10 sample paths")
    qs = np.quantile(paths, levels, axis=0)  # (n_levels, n)
    coverage = np.mean(y[None, :] <= qs, axis=1)
    return float(np.mean(np.abs(coverage - np.asarray(levels))))
