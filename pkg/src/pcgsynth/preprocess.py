"""Band-pass filtering, standardization, and Nyquist-rate decimation.

The band-pass is a first-order Butterworth realized as a single biquad: the
analog prototype H(s) = B*s / (s^2 + B*s + w0^2) built from bilinear-pre-warped
band edges, mapped to the z-domain with the bilinear transform. This gives
structural zeros at DC and Nyquist and unit gain at the (warped) geometric
center frequency.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import DegenerateSignalError, FormatError


@dataclass(frozen=True)
class BandPassSpec:
    low_hz: float = 40.0
    high_hz: float = 400.0
    order: int = 1
    sample_rate_hz: int = 4000

    def __post_init__(self):
        if not 0.0 < self.low_hz < self.high_hz < self.sample_rate_hz / 2.0:
            raise ValueError(
                f"band edges must satisfy 0 < low < high < fs/2, got "
                f"({self.low_hz}, {self.high_hz}) at fs={self.sample_rate_hz}"
            )
        if self.order != 1:
            raise ValueError("only the first-order (single biquad) design is supported")


@dataclass(frozen=True)
class BiquadCoefficients:
    """Normalized biquad (a0 = 1): y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2]
    - a1 y[n-1] - a2 y[n-2]."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    @property
    def b(self):
        return np.array([self.b0, self.b1, self.b2])

    @property
    def a(self):
        return np.array([1.0, self.a1, self.a2])


def _warp(f_hz: float, fs: float) -> float:
    """Analog frequency (rad/s) that the bilinear transform maps to f_hz."""
    return 2.0 * fs * np.tan(np.pi * f_hz / fs)


def design_bandpass(spec: BandPassSpec) -> BiquadCoefficients:
    """First-order Butterworth band-pass via the bilinear transform."""
    fs = float(spec.sample_rate_hz)
    w1 = _warp(spec.low_hz, fs)
    w2 = _warp(spec.high_hz, fs)
    bw = w2 - w1
    w0_sq = w1 * w2
    k = 2.0 * fs
    a0 = k * k + bw * k + w0_sq
    coeffs = BiquadCoefficients(
        b0=bw * k / a0,
        b1=0.0,
        b2=-bw * k / a0,
        a1=2.0 * (w0_sq - k * k) / a0,
        a2=(k * k - bw * k + w0_sq) / a0,
    )
    poles = np.roots([1.0, coeffs.a1, coeffs.a2])
    if np.any(np.abs(poles) >= 1.0):
        raise ValueError(f"unstable design for {spec}")
    return coeffs


def center_frequency_hz(spec: BandPassSpec) -> float:
    """Digital frequency at which the designed band-pass has unit gain."""
    fs = float(spec.sample_rate_hz)
    w0 = np.sqrt(_warp(spec.low_hz, fs) * _warp(spec.high_hz, fs))
    return float(fs / np.pi * np.arctan(w0 / (2.0 * fs)))


def gain_at(coeffs: BiquadCoefficients, freq_hz: float, sample_rate_hz: float) -> float:
    """|H(e^{j 2 pi f / fs})| of the biquad."""
    z = np.exp(-2j * np.pi * freq_hz / sample_rate_hz)
    num = coeffs.b0 + coeffs.b1 * z + coeffs.b2 * z * z
    den = 1.0 + coeffs.a1 * z + coeffs.a2 * z * z
    return float(np.abs(num / den))


def apply_filter(samples, coeffs: BiquadCoefficients) -> np.ndarray:
    """Single forward pass of the difference equation with zero initial state."""
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("filter input contains NaN or Inf")
    return lfilter(coeffs.b, coeffs.a, x)


def standardize(samples) -> np.ndarray:
    """Shift/scale to zero mean and unit population standard deviation."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("standardize needs at least 2 samples")
    std = float(np.std(x))
    if std == 0.0:
        raise DegenerateSignalError("cannot standardize a constant signal")
    return (x - np.mean(x)) / std


def downsample(samples, sample_rate_hz: int, target_hz: int = 800):
    """Pure decimation: keep every k-th sample, k = fs / target.

    The caller is responsible for having band-limited the signal first (the
    400 Hz band-pass edge serves as the anti-alias filter for 800 Hz).
    """
    if target_hz <= 0 or sample_rate_hz % target_hz != 0:
        raise ValueError(
            f"sample rate {sample_rate_hz} is not an integer multiple of {target_hz}"
        )
    k = sample_rate_hz // target_hz
    x = np.asarray(samples, dtype=np.float64)
    return x[::k].copy(), target_hz


def unit_range_normalize(samples) -> np.ndarray:
    """Scale so the maximum absolute value is exactly 1."""
    x = np.asarray(samples, dtype=np.float64)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak == 0.0:
        raise DegenerateSignalError("cannot unit-range normalize an all-zero signal")
    return x / peak


def write_sig(path, samples: np.ndarray) -> None:
    """Binary signal file: u64 little-endian length prefix, then f64 LE values."""
    x = np.asarray(samples, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", x.size))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def read_sig(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated .sig file")
    (n,) = struct.unpack_from("<Q", blob, 0)
    if len(blob) != 8 + 8 * n:
        raise FormatError(f"{path}: length prefix {n} does not match payload")
    return np.frombuffer(blob, dtype="<f8", count=n, offset=8).astype(np.float64)
