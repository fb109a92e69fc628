"""Recording ingestion: WAV files, the dataset manifest, and synthetic fixtures.

WAV support is deliberately narrow: RIFF/WAVE, 16-bit PCM, little-endian, mono,
matching the source dataset. Everything else is rejected loudly so that
ingestion stays bit-exact.
"""

from __future__ import annotations

import csv
import logging
import wave
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedFormatError
from .nn.params import make_rng

log = logging.getLogger(__name__)

SOURCE_RATE_HZ = 4000
MANIFEST_HEADER = ["subject_id", "wav_path", "location", "outcome"]

# Gaussian envelope width of a synthetic heart-sound burst, and the carrier
# frequencies used for S1/S2. Both carriers sit inside the 40-400 Hz band so
# fixtures survive the band-pass stage.
_BURST_SIGMA_S = 0.02
_S1_CARRIER_HZ = 40.0
_S2_CARRIER_HZ = 55.0
_S2_RELATIVE_AMPLITUDE = 0.6


class Location(Enum):
    PV = "PV"
    AV = "AV"
    MV = "MV"
    TV = "TV"
    Phc = "Phc"
    unknown = "unknown"


class Outcome(Enum):
    Normal = "Normal"
    Abnormal = "Abnormal"
    Unknown = "Unknown"


@dataclass(eq=False)
class Recording:
    """One mono PCG waveform plus subject metadata."""

    subject_id: str
    sample_rate_hz: int
    samples: np.ndarray
    location: Location = Location.unknown
    outcome: Outcome = Outcome.Unknown

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class ManifestRow:
    subject_id: str
    wav_path: Path
    location: Location
    outcome: Outcome


@dataclass(frozen=True)
class FixtureSpec:
    """Parameters of a synthetic beat-train corpus used in place of the
    access-gated clinical dataset."""

    n_recordings: int
    duration_s: float
    heart_rate_bpm: float
    s1_s2_gap_s: float
    noise_std: float
    seed: int

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not 40.0 <= self.heart_rate_bpm <= 200.0:
            raise ValueError("heart_rate_bpm must lie in [40, 200]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass
class RowError:
    subject_id: str
    wav_path: str
    message: str


@dataclass
class LoadResult:
    recordings: list[Recording] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)


def read_wav(path, subject_id: str | None = None) -> Recording:
    """Read a 16-bit PCM mono WAV into amplitudes in [-1, 1] (divide by 32768)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            sampwidth = wav.getsampwidth()
            comptype = wav.getcomptype()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: malformed WAV file: {exc}") from exc
    if comptype != "NONE":
        raise UnsupportedFormatError(f"{path}: compressed WAV ({comptype}) is not supported")
    if n_channels != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got {n_channels} channels")
    if sampwidth != 2:
        raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    pcm = np.frombuffer(frames, dtype="<i2")
    if pcm.size == 0:
        raise FormatError(f"{path}: WAV contains no samples")
    return Recording(
        subject_id=subject_id if subject_id is not None else path.stem,
        sample_rate_hz=rate,
        samples=pcm.astype(np.float64) / 32768.0,
    )


def write_wav(path, samples: np.ndarray, sample_rate_hz: int) -> None:
    """Write amplitudes as 16-bit PCM mono; values are clipped to [-1, 1]."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(int(sample_rate_hz))
        wav.writeframes(pcm.tobytes())


def load_manifest(path) -> list[ManifestRow]:
    """Parse the dataset manifest CSV. wav_path entries are resolved relative
    to the manifest's own directory."""
    path = Path(path)
    base = path.parent
    rows: list[ManifestRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty manifest") from None
        if header != MANIFEST_HEADER:
            raise FormatError(
                f"{path}: bad manifest header {header!r}, expected {MANIFEST_HEADER!r}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
            subject_id, wav_path, loc_raw, outcome_raw = rec
            if not subject_id:
                raise FormatError(f"{path}:{lineno}: empty subject_id")
            try:
                outcome = Outcome(outcome_raw)
            except ValueError:
                raise FormatError(
                    f"{path}:{lineno}: unknown outcome {outcome_raw!r}"
                ) from None
            try:
                location = Location(loc_raw)
            except ValueError:
                location = Location.unknown
            rows.append(ManifestRow(subject_id, base / wav_path, location, outcome))
    return rows


def load_normal_subjects(manifest: list[ManifestRow]) -> LoadResult:
    """Load every manifest row with a Normal outcome.

    Per-row failures (missing or unreadable files) are collected in the result
    instead of aborting the whole load.
    """
    result = LoadResult()
    for row in manifest:
        if row.outcome is not Outcome.Normal:
            continue
        try:
            rec = read_wav(row.wav_path, subject_id=row.subject_id)
        except (OSError, FormatError) as exc:
            result.errors.append(RowError(row.subject_id, str(row.wav_path), str(exc)))
            continue
        rec.location = row.location
        rec.outcome = row.outcome
        result.recordings.append(rec)
    if not result.recordings:
        log.warning("manifest contained no loadable Normal recordings")
    return result


def trim_edges(rec: Recording, fraction: float = 0.10) -> Recording:
    """Drop the first and last ``fraction`` of samples (edge artifacts)."""
    if not 0.0 <= fraction < 0.5:
        raise ValueError(f"trim fraction must lie in [0, 0.5), got {fraction}")
    n = rec.samples.size
    if n < 10:
        raise ValueError(f"recording too short to trim ({n} samples)")
    cut = int(np.floor(fraction * n))
    return Recording(
        subject_id=rec.subject_id,
        sample_rate_hz=rec.sample_rate_hz,
        samples=rec.samples[cut : n - cut].copy(),
        location=rec.location,
        outcome=rec.outcome,
    )


def _add_burst(signal: np.ndarray, fs: int, center_s: float, amplitude: float,
               carrier_hz: float) -> None:
    """Add one Gaussian-envelope carrier burst in place (support: +-5 sigma)."""
    half = int(np.ceil(5.0 * _BURST_SIGMA_S * fs))
    c = int(round(center_s * fs))
    lo = max(0, c - half)
    hi = min(signal.size, c + half + 1)
    if lo >= hi:
        return
    t = np.arange(lo, hi) / fs - center_s
    signal[lo:hi] += amplitude * np.exp(-0.5 * (t / _BURST_SIGMA_S) ** 2) * np.sin(
        2.0 * np.pi * carrier_hz * t
    )


def synth_fixture(spec: FixtureSpec) -> list[Recording]:
    """Generate beat-train recordings: an S1 burst at every beat onset, an S2
    burst ``s1_s2_gap_s`` later at 0.6x amplitude, plus optional Gaussian noise.
    Deterministic for a fixed seed."""
    rng = make_rng(spec.seed)
    fs = SOURCE_RATE_HZ
    n = int(round(spec.duration_s * fs))
    period = 60.0 / spec.heart_rate_bpm
    locations = [Location.PV, Location.AV, Location.MV, Location.TV]
    out = []
    for i in range(spec.n_recordings):
        signal = np.zeros(n)
        beat = 0.0
        while beat < spec.duration_s:
            _add_burst(signal, fs, beat, 1.0, _S1_CARRIER_HZ)
            _add_burst(signal, fs, beat + spec.s1_s2_gap_s, _S2_RELATIVE_AMPLITUDE,
                       _S2_CARRIER_HZ)
            beat += period
        if spec.noise_std > 0:
            signal = signal + rng.normal(0.0, spec.noise_std, size=n)
        out.append(
            Recording(
                subject_id=f"fix{i:03d}",
                sample_rate_hz=fs,
                samples=signal,
                location=locations[i % len(locations)],
                outcome=Outcome.Normal,
            )
        )
    return out
