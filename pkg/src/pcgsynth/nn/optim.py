"""Adam optimizer over named parameter collections."""

from __future__ import annotations

from typing import Dict

import numpy as np

from ..errors import TrainingDivergedError
from .params import ModelParams


class Adam:
    """Bias-corrected Adam. Moments are per-parameter and update order is
    name-lexicographic, so results do not depend on gradient dict ordering."""

    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.items()}

    def step(self, params: ModelParams, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in params.names():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(f"non-finite gradient for {name!r} at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] = params[name] - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
