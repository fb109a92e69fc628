"""Corruption screening: three per-recording criteria and a pass/fail gate.

A recording qualifies for further processing only if
  * RMSSD of successive differences stays below ``rmssd_max`` (>= fails),
  * the zero-crossing ratio does not exceed ``zcr_max`` (> fails),
  * at least ``peak_window_min_fraction`` of its 2200 ms windows contain a
    physiologically plausible number of peaks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .ingest import Recording
from .segment import PeakParams, detect_peaks


class Criterion(Enum):
    RMSSD = "RMSSD"
    ZCR = "ZCR"
    PEAK_WINDOWS = "PEAK_WINDOWS"


@dataclass(frozen=True)
class QualityThresholds:
    rmssd_max: float = 0.1
    zcr_max: float = 0.3
    peak_window_min_fraction: float = 0.5
    window_ms: float = 2200.0
    peaks_per_window_min: int = 1
    peaks_per_window_max: int = 8
    # Peak definition used inside windows. 0.1 s spacing keeps S1 and S2 as
    # separate peaks while still capping a clean window well below the noise
    # regime; prominence is relative to the unit-range-normalized signal.
    peak_min_distance_s: float = 0.1
    peak_min_prominence: float = 0.2

    def __post_init__(self):
        if min(self.rmssd_max, self.zcr_max, self.window_ms) <= 0:
            raise ValueError("thresholds must be positive")
        if not 0.0 < self.peak_window_min_fraction <= 1.0:
            raise ValueError("peak_window_min_fraction must lie in (0, 1]")


@dataclass
class QualityReport:
    rmssd: float
    zcr: float
    peak_window_ratio: float
    passed: bool
    failed_criteria: set[Criterion] = field(default_factory=set)


def rmssd(samples) -> float:
    """Root mean square of successive sample differences."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("rmssd needs at least 2 samples")
    d = np.diff(x)
    return float(np.sqrt(np.mean(d * d)))


def zero_crossing_ratio(samples) -> float:
    """Sign changes between consecutive samples, divided by the total length.

    Exact zeros inherit the previous nonzero sign so a single pass through
    zero counts once.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("zero_crossing_ratio needs at least 2 samples")
    s = np.sign(x)
    nonzero = s != 0
    idx = np.where(nonzero, np.arange(n), -1)
    last = np.maximum.accumulate(idx)
    filled = np.where(last >= 0, s[np.maximum(last, 0)], 0.0)
    crossings = int(np.sum(filled[1:] * filled[:-1] < 0))
    return crossings / n


def peak_window_ratio(samples, sample_rate_hz: int,
                      thresholds: QualityThresholds = QualityThresholds()) -> float:
    """Fraction of non-overlapping windows whose peak count is in range.

    The signal is unit-range normalized once so the prominence threshold is
    amplitude-independent; a trailing partial window is dropped.
    """
    x = np.asarray(samples, dtype=np.float64)
    window = int(round(thresholds.window_ms * sample_rate_hz / 1000.0))
    n_windows = x.size // window
    if n_windows < 1:
        raise ValueError(
            f"signal shorter than one {thresholds.window_ms:.0f} ms window "
            f"({x.size} < {window} samples)"
        )
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak
    params = PeakParams(
        min_distance_samples=max(1, int(round(thresholds.peak_min_distance_s * sample_rate_hz))),
        min_prominence=thresholds.peak_min_prominence,
    )
    good = 0
    for w in range(n_windows):
        seg = x[w * window : (w + 1) * window]
        count = detect_peaks(seg, params).indices.size
        if thresholds.peaks_per_window_min <= count <= thresholds.peaks_per_window_max:
            good += 1
    return good / n_windows


def assess(rec: Recording, thresholds: QualityThresholds = QualityThresholds()) -> QualityReport:
    """Run all three criteria; passing requires every one of them to hold."""
    r = rmssd(rec.samples)
    z = zero_crossing_ratio(rec.samples)
    p = peak_window_ratio(rec.samples, rec.sample_rate_hz, thresholds)
    failed = set()
    if r >= thresholds.rmssd_max:
        failed.add(Criterion.RMSSD)
    if z > thresholds.zcr_max:
        failed.add(Criterion.ZCR)
    if p < thresholds.peak_window_min_fraction:
        failed.add(Criterion.PEAK_WINDOWS)
    return QualityReport(rmssd=r, zcr=z, peak_window_ratio=p,
                         passed=not failed, failed_criteria=failed)


def write_quality_csv(path, entries: list[tuple[str, QualityReport]]) -> None:
    """One CSV row per recording: id, criterion values, verdict, failures."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "rmssd", "zcr", "peak_window_ratio",
                         "pass", "failed_criteria"])
        for subject_id, rep in entries:
            failed = ";".join(sorted(c.value for c in rep.failed_criteria))
            writer.writerow([subject_id, repr(rep.rmssd), repr(rep.zcr),
                             repr(rep.peak_window_ratio),
                             "true" if rep.passed else "false", failed])
