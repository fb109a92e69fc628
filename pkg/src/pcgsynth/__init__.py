"""pcgsynth: phonocardiogram screening, segmentation, and desk-scale
generative modeling with a verified numerical core."""

__version__ = "0.1.0"
