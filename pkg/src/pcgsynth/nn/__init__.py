"""Minimal float64 neural substrate shared by the generative models."""

from .gradcheck import finite_diff_check
from .mulaw import mu_law_decode, mu_law_encode
from .optim import Adam
from .params import ModelParams, make_rng, uniform_init

__all__ = [
    "Adam",
    "ModelParams",
    "finite_diff_check",
    "make_rng",
    "mu_law_decode",
    "mu_law_encode",
    "uniform_init",
]
