"""Desk-scale generative models over segment corpora."""

from . import dgan, diffusion, wavenet

__all__ = ["dgan", "diffusion", "wavenet"]
