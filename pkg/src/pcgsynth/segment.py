"""Wavelet feature extraction, S1 peak detection, and beat windowing.

The discrete wavelet transform is the Mallat pyramid with orthonormal
Daubechies filters; segmentation runs on the level-2 approximation sequence
(effective rate = input rate / 4), where a 110-sample window spans roughly
550 ms and covers the S2 sound following each detected S1 peak.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn.params import make_rng

SEGMENT_LENGTH = 110

_S3 = np.sqrt(3.0)
_N4 = 4.0 * np.sqrt(2.0)

# Orthonormal Daubechies scaling (reconstruction low-pass) filters; taps sum
# to sqrt(2). db2 is exact; db4/db8 are the standard published values.
WAVELETS: dict[str, np.ndarray] = {
    "db2": np.array([(1 + _S3) / _N4, (3 + _S3) / _N4, (3 - _S3) / _N4, (1 - _S3) / _N4]),
    "db4": np.array([
        0.23037781330885523, 0.71484657055254153, 0.63088076792959036,
        -0.02798376941698385, -0.18703481171888114, 0.03084138183598697,
        0.03288301166698295, -0.01059740178499728,
    ]),
    "db8": np.array([
        0.05441584224308161, 0.31287159091446592, 0.67563073629801285,
        0.58535468365486909, -0.01582910525602389, -0.28401554296242809,
        0.00047248457399797254, 0.12874742662018601, -0.01736930100202211,
        -0.04408825393106472, 0.01398102791701553, 0.00874609404701566,
        -0.00487035299301066, -0.00039174037299597711, 0.00067544940599855677,
        -0.00011747678400228192,
    ]),
}


def _filters(wavelet: str):
    """(low-pass h, high-pass g) analysis pair: g[n] = (-1)^n h[F-1-n]."""
    try:
        h = WAVELETS[wavelet]
    except KeyError:
        raise ValueError(f"unknown wavelet {wavelet!r}, pick one of {sorted(WAVELETS)}") from None
    signs = np.where(np.arange(h.size) % 2 == 0, 1.0, -1.0)
    g = signs * h[::-1]
    return h, g


@dataclass(frozen=True)
class DwtConfig:
    wavelet: str = "db4"
    level: int = 2

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be >= 1")
        _filters(self.wavelet)

    def effective_rate(self, input_rate_hz: float) -> float:
        return input_rate_hz / 2**self.level


def _analysis(x: np.ndarray, filt: np.ndarray, mode: str) -> np.ndarray:
    """Correlate with an analysis filter and downsample by 2."""
    f = filt.size
    if mode == "periodic":
        if x.size % 2:
            raise ValueError("periodic mode requires even length")
        idx = (2 * np.arange(x.size // 2)[:, None] + np.arange(f)[None, :]) % x.size
        return x[idx] @ filt
    if mode in ("symmetric", "zero"):
        pad_mode = "symmetric" if mode == "symmetric" else "constant"
        ext = np.pad(x, (f - 1, f - 1), mode=pad_mode)
        n_out = (ext.size - f) // 2 + 1
        idx = 2 * np.arange(n_out)[:, None] + np.arange(f)[None, :]
        return ext[idx] @ filt
    raise ValueError(f"unknown padding mode {mode!r}")


def dwt_single(x, wavelet: str = "db4", mode: str = "symmetric"):
    """One analysis level: returns (approximation, detail) coefficients.

    Analysis correlates with the filters at even shifts, a[k] = <x, h(. - 2k)>,
    which is the adjoint of the synthesis in ``idwt_single``.
    """
    x = np.asarray(x, dtype=np.float64)
    h, g = _filters(wavelet)
    if x.size < h.size:
        raise ValueError(f"signal too short for {wavelet} ({x.size} < {h.size} samples)")
    return _analysis(x, h, mode), _analysis(x, g, mode)


def idwt_single(approx, detail, wavelet: str = "db4", mode: str = "periodic") -> np.ndarray:
    """Inverse of one periodic analysis level (exact for orthonormal filters)."""
    if mode != "periodic":
        raise ValueError("reconstruction is only provided for periodic mode")
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.shape != d.shape:
        raise ValueError("approximation/detail length mismatch")
    h, g = _filters(wavelet)
    n = 2 * a.size
    x = np.zeros(n)
    # x[m] = sum_k a[k] h[m - 2k] + d[k] g[m - 2k], indices mod n
    base = (2 * np.arange(a.size)[:, None] + np.arange(h.size)[None, :]) % n
    np.add.at(x, base, a[:, None] * h[None, :])
    np.add.at(x, base, d[:, None] * g[None, :])
    return x


def dwt_approx(samples, config: DwtConfig = DwtConfig(), mode: str = "symmetric") -> np.ndarray:
    """Level-``config.level`` approximation coefficients of the Mallat pyramid."""
    x = np.asarray(samples, dtype=np.float64)
    h, _ = _filters(config.wavelet)
    if x.size < h.size * 2**config.level:
        raise ValueError(
            f"signal too short for {config.level} levels of {config.wavelet} "
            f"({x.size} < {h.size * 2 ** config.level} samples)"
        )
    for _ in range(config.level):
        x, _detail = dwt_single(x, config.wavelet, mode)
    return x


def dwt_full(samples, wavelet: str = "db4", level: int = 1, mode: str = "periodic"):
    """Full decomposition: (approximation, [detail_level1, ..., detail_levelL])."""
    x = np.asarray(samples, dtype=np.float64)
    details = []
    for _ in range(level):
        x, d = dwt_single(x, wavelet, mode)
        details.append(d)
    return x, details


@dataclass(frozen=True)
class PeakParams:
    min_distance_samples: int
    min_prominence: float
    height_outlier_z: float = 3.0

    def __post_init__(self):
        if self.min_distance_samples < 1:
            raise ValueError("min_distance_samples must be >= 1")
        if self.min_prominence < 0:
            raise ValueError("min_prominence must be >= 0")

    @classmethod
    def default(cls, sample_rate_hz: float) -> "PeakParams":
        """Segmentation defaults: 0.3 s spacing (max ~200 bpm) and prominence
        0.2 on a unit-range signal."""
        return cls(min_distance_samples=max(1, int(round(0.3 * sample_rate_hz))),
                   min_prominence=0.2)


@dataclass
class PeakSet:
    indices: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.heights = np.asarray(self.heights, dtype=np.float64)

    def __len__(self):
        return self.indices.size


def _plateau_left_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima; plateaus contribute their left edge."""
    n = x.size
    starts = np.flatnonzero(np.r_[True, x[1:] != x[:-1]])
    ends = np.r_[starts[1:] - 1, n - 1]
    inner = (starts > 0) & (ends < n - 1)
    vals = x[starts]
    keep = inner.copy()
    keep[inner] = (vals[inner] > x[starts[inner] - 1]) & (vals[inner] > x[ends[inner] + 1])
    return starts[keep]


def _prominence_ok(x: np.ndarray, i: int, threshold: float) -> bool:
    """Whether peak i has prominence >= threshold.

    Walks outward from the peak; each side stops at a strictly higher sample,
    the array boundary, or as soon as its running minimum is already low
    enough (prominence only grows as the walk extends).
    """
    h = x[i]
    target = h - threshold
    for step in (-1, 1):
        j = i + step
        low = np.inf
        while 0 <= j < x.size:
            v = x[j]
            if v > h:
                break
            if v < low:
                low = v
                if low <= target:
                    break
            j += step
        if low > target:
            return False
    return True


def detect_peaks(samples, params: PeakParams) -> PeakSet:
    """Prominence-filtered local maxima with a greedy minimum-distance rule.

    When two candidates are closer than ``min_distance_samples``, the higher
    one wins (ties go to the earlier index).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 3:
        return PeakSet(np.empty(0, dtype=np.int64), np.empty(0))
    cand = _plateau_left_maxima(x)
    if params.min_prominence > 0 and cand.size:
        mask = np.fromiter(
            (_prominence_ok(x, int(i), params.min_prominence) for i in cand),
            dtype=bool, count=cand.size,
        )
        cand = cand[mask]
    if cand.size == 0:
        return PeakSet(np.empty(0, dtype=np.int64), np.empty(0))
    heights = x[cand]
    order = np.lexsort((cand, -heights))
    alive = np.ones(cand.size, dtype=bool)
    kept = []
    d = params.min_distance_samples
    for pos in order:
        if not alive[pos]:
            continue
        i = cand[pos]
        kept.append(i)
        lo = np.searchsorted(cand, i - d + 1, side="left")
        hi = np.searchsorted(cand, i + d - 1, side="right")
        alive[lo:hi] = False
    kept = np.sort(np.asarray(kept, dtype=np.int64))
    return PeakSet(kept, x[kept])


def reject_extreme_peaks(peaks: PeakSet, z: float = 3.0) -> PeakSet:
    """Drop peaks whose height |z-score| exceeds z (vs all peak heights).

    With fewer than two peaks or zero height variance everything is kept.
    """
    if len(peaks) <= 1:
        return PeakSet(peaks.indices.copy(), peaks.heights.copy())
    mean = np.mean(peaks.heights)
    std = np.std(peaks.heights)
    if std == 0.0:
        return PeakSet(peaks.indices.copy(), peaks.heights.copy())
    keep = np.abs(peaks.heights - mean) / std <= z
    return PeakSet(peaks.indices[keep], peaks.heights[keep])


@dataclass
class SegmentMatrix:
    """N x 110 training corpus; every row is unit-range normalized and tagged
    with (subject_id, peak_index) provenance."""

    values: np.ndarray
    provenance: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            self.values = self.values.reshape(0, SEGMENT_LENGTH)
        if self.provenance and len(self.provenance) != self.values.shape[0]:
            raise ValueError("provenance length does not match row count")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path, provenance_path=None) -> "SegmentMatrix":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.reader(fh):
                if rec:
                    rows.append([float(v) for v in rec])
        values = np.asarray(rows) if rows else np.empty((0, SEGMENT_LENGTH))
        prov = []
        if provenance_path is not None:
            with open(provenance_path, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader)  # header
                prov = [(sid, int(idx)) for sid, idx in reader]
        return cls(values, prov)

    def save_provenance(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject_id", "peak_index"])
            for sid, idx in self.provenance:
                writer.writerow([sid, idx])

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", self.n_rows))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load_binary(cls, path) -> "SegmentMatrix":
        path = Path(path)
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 8:
            raise FormatError(f"{path}: truncated segment file")
        (rows,) = struct.unpack_from("<Q", blob, 0)
        expected = 8 + 8 * rows * SEGMENT_LENGTH
        if len(blob) != expected:
            raise FormatError(f"{path}: payload does not match {rows} rows of {SEGMENT_LENGTH}")
        values = np.frombuffer(blob, dtype="<f8", offset=8).reshape(rows, SEGMENT_LENGTH)
        return cls(values.astype(np.float64))


def extract_segments(samples, peaks: PeakSet, length: int = SEGMENT_LENGTH,
                     center_offset: int = 0, subject_id: str = "") -> SegmentMatrix:
    """Cut one window per peak, centered on it (plus ``center_offset``).

    Windows running over either signal boundary are skipped; every surviving
    row is unit-range normalized on its own.
    """
    if length < 2:
        raise ValueError("segment length must be >= 2")
    x = np.asarray(samples, dtype=np.float64)
    rows = []
    prov = []
    for p in peaks.indices:
        start = int(p) - length // 2 + center_offset
        end = start + length
        if start < 0 or end > x.size:
            continue
        row = x[start:end]
        peak_abs = np.max(np.abs(row))
        if peak_abs == 0.0:
            continue
        rows.append(row / peak_abs)
        prov.append((subject_id, int(p)))
    values = np.vstack(rows) if rows else np.empty((0, length))
    return SegmentMatrix(values, prov)


def concat_matrices(matrices: list[SegmentMatrix]) -> SegmentMatrix:
    non_empty = [m for m in matrices if m.n_rows]
    if not non_empty:
        return SegmentMatrix(np.empty((0, SEGMENT_LENGTH)))
    values = np.vstack([m.values for m in non_empty])
    prov = [p for m in non_empty for p in m.provenance]
    return SegmentMatrix(values, prov)


def sine_segments(n_rows: int, seed: int, length: int = SEGMENT_LENGTH,
                  periods: tuple = (22.0, 28.0, 36.0), amplitude: float = 0.9) -> SegmentMatrix:
    """Smooth sinusoid corpus for forecasting experiments: per-row random
    period (from a small menu) and phase, fixed amplitude."""
    rng = make_rng(seed)
    t = np.arange(length)
    rows = np.empty((n_rows, length))
    for i in range(n_rows):
        period = periods[int(rng.integers(len(periods)))]
        phase = rng.uniform(0.0, 2.0 * np.pi)
        rows[i] = amplitude * np.sin(2.0 * np.pi * t / period + phase)
    return SegmentMatrix(rows, [("sine", i) for i in range(n_rows)])
