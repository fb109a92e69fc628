"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Dict, Tuple

import numpy as np

from ..errors import CheckInvalidError
from .params import ModelParams, make_rng

LossFn = Callable[[ModelParams], Tuple[float, Dict[str, np.ndarray]]]


def finite_diff_check(loss_fn: LossFn, params: ModelParams, epsilon: float = 1e-5,
                      max_coords_per_param: int | None = 8, seed: int = 0) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn(params) -> (loss, grads)`` must be deterministic (it is evaluated
    twice up front and must reproduce the loss exactly). Coordinates are
    subsampled per parameter tensor when ``max_coords_per_param`` is set, since
    two loss evaluations per coordinate get expensive on full models.

    Returns the maximum relative error
        |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|).
    """
    loss_a, grads = loss_fn(params)
    loss_b, _ = loss_fn(params)
    if loss_a != loss_b:
        raise CheckInvalidError(
            f"loss is not deterministic ({loss_a!r} != {loss_b!r}); cannot verify gradients"
        )

    rng = make_rng(seed)
    worst = 0.0
    for name in params.names():
        base = params[name].copy()
        grad = np.asarray(grads[name])
        if grad.shape != base.shape:
            raise CheckInvalidError(f"gradient shape mismatch for {name!r}")
        size = base.size
        if max_coords_per_param is None or size <= max_coords_per_param:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords_per_param, replace=False)
        for idx in coords:
            probe = base.copy()
            probe.flat[idx] = base.flat[idx] + epsilon
            params[name] = probe
            up, _ = loss_fn(params)
            probe.flat[idx] = base.flat[idx] - epsilon
            params[name] = probe
            down, _ = loss_fn(params)
            g_fd = (up - down) / (2.0 * epsilon)
            g_an = grad.flat[idx]
            err = abs(g_an - g_fd) / max(1e-8, abs(g_an) + abs(g_fd))
            worst = max(worst, err)
        params[name] = base
    return worst
