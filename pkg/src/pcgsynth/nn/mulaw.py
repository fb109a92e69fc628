"""Mu-law companding between [-1, 1] amplitudes and categorical bins."""

from __future__ import annotations

import numpy as np


def mu_law_encode(x, levels: int = 256) -> np.ndarray:
    """Compress amplitudes in [-1, 1] and quantize to integer bins 0..levels-1.

    y = sign(x) * ln(1 + mu*|x|) / ln(1 + mu) with mu = levels - 1, then the
    compressed value is mapped linearly onto bins: floor((y + 1)/2 * levels),
    clamped into range.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("mu-law input must lie in [-1, 1]")
    mu = levels - 1
    y = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    bins = np.floor((y + 1.0) / 2.0 * levels).astype(np.int64)
    return np.clip(bins, 0, levels - 1)


def mu_law_decode(bins, levels: int = 256) -> np.ndarray:
    """Map bins back to amplitudes via bin centers of the companded axis."""
    bins = np.asarray(bins)
    mu = levels - 1
    y = 2.0 * (bins + 0.5) / levels - 1.0
    return np.sign(y) * ((1.0 + mu) ** np.abs(y) - 1.0) / mu
