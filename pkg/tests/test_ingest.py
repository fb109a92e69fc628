import csv

import numpy as np
import pytest

from pcgsynth import ingest
from pcgsynth.errors import FormatError, UnsupportedFormatError
from pcgsynth.segment import PeakParams, detect_peaks


def write_pcm16(path, pcm, rate=4000, channels=1):
    import wave

    data = np.asarray(pcm, dtype="<i2")
    if channels == 2:
        data = np.repeat(data, 2)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(data.tobytes())


class TestReadWav:
    def test_pcm_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        write_pcm16(path, [0, 16384, -16384])
        rec = ingest.read_wav(path)
        assert rec.sample_rate_hz == 4000
        np.testing.assert_allclose(rec.samples, [0.0, 0.5, -0.5], atol=0)

    def test_full_scale_sample(self, tmp_path):
        path = tmp_path / "b.wav"
        write_pcm16(path, [32767])
        rec = ingest.read_wav(path)
        assert rec.samples[0] == pytest.approx(32767 / 32768, abs=1e-12)

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "c.wav"
        write_pcm16(path, [0, 1, 2], channels=2)
        with pytest.raises(UnsupportedFormatError):
            ingest.read_wav(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFFnonsense")
        with pytest.raises(FormatError):
            ingest.read_wav(path)

    def test_roundtrip_within_one_step(self, tmp_path):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1.0, 1.0, size=2000)
        x[0] = 1.0
        x[1] = -1.0
        path = tmp_path / "rt.wav"
        ingest.write_wav(path, x, 4000)
        back = ingest.read_wav(path)
        assert np.max(np.abs(back.samples - x)) <= 1.0 / 32768


def make_manifest(tmp_path, rows):
    path = tmp_path / "manifest.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ingest.MANIFEST_HEADER)
        writer.writerows(rows)
    return path


class TestManifest:
    def test_filters_to_normal(self, tmp_path):
        for name in ("s1", "s2", "s3", "s4", "s5"):
            write_pcm16(tmp_path / f"{name}.wav", [0, 100, -100, 50])
        path = make_manifest(tmp_path, [
            ["s1", "s1.wav", "PV", "Normal"],
            ["s2", "s2.wav", "AV", "Abnormal"],
            ["s3", "s3.wav", "MV", "Normal"],
            ["s4", "s4.wav", "TV", "Abnormal"],
            ["s5", "s5.wav", "Phc", "Normal"],
        ])
        result = ingest.load_normal_subjects(ingest.load_manifest(path))
        assert [r.subject_id for r in result.recordings] == ["s1", "s3", "s5"]
        assert result.recordings[0].location is ingest.Location.PV
        assert not result.errors

    def test_no_normal_rows(self, tmp_path):
        write_pcm16(tmp_path / "s1.wav", [1])
        path = make_manifest(tmp_path, [["s1", "s1.wav", "PV", "Abnormal"]])
        result = ingest.load_normal_subjects(ingest.load_manifest(path))
        assert result.recordings == []
        assert result.errors == []

    def test_missing_file_collected_not_raised(self, tmp_path):
        path = make_manifest(tmp_path, [["s1", "nope.wav", "PV", "Normal"]])
        result = ingest.load_normal_subjects(ingest.load_manifest(path))
        assert result.recordings == []
        assert len(result.errors) == 1
        assert result.errors[0].subject_id == "s1"

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("id,path\n1,a.wav\n")
        with pytest.raises(FormatError):
            ingest.load_manifest(path)

    def test_unknown_outcome_rejected(self, tmp_path):
        path = make_manifest(tmp_path, [["s1", "s1.wav", "PV", "Weird"]])
        with pytest.raises(FormatError):
            ingest.load_manifest(path)


class TestTrimEdges:
    def rec(self, n):
        return ingest.Recording("s", 4000, np.arange(1, n + 1, dtype=float))

    def test_ten_percent(self):
        out = ingest.trim_edges(self.rec(100), 0.10)
        assert out.samples.size == 80
        assert out.samples[0] == 11.0  # index 10 of the original
        assert out.samples[-1] == 90.0  # index 89

    def test_zero_fraction_is_identity(self):
        rec = self.rec(100)
        out = ingest.trim_edges(rec, 0.0)
        np.testing.assert_array_equal(out.samples, rec.samples)

    def test_too_short(self):
        with pytest.raises(ValueError):
            ingest.trim_edges(self.rec(9))

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            ingest.trim_edges(self.rec(100), 0.5)

    def test_trim_then_zero_equals_single_trim(self):
        rec = self.rec(173)
        once = ingest.trim_edges(rec, 0.1)
        twice = ingest.trim_edges(once, 0.0)
        np.testing.assert_array_equal(once.samples, twice.samples)


class TestSynthFixture:
    SPEC = ingest.FixtureSpec(n_recordings=1, duration_s=10.0, heart_rate_bpm=60.0,
                              s1_s2_gap_s=0.3, noise_std=0.0, seed=7)

    def test_s1_burst_count(self):
        rec = ingest.synth_fixture(self.SPEC)[0]
        # S1 crests reach ~0.95; S2 tops out near 0.56, so a 0.7 prominence
        # floor isolates one peak per beat
        peaks = detect_peaks(rec.samples,
                             PeakParams(min_distance_samples=2000, min_prominence=0.7))
        assert len(peaks) == 10
        beat_samples = np.diff(peaks.indices)
        np.testing.assert_allclose(beat_samples, 4000, atol=2)

    def test_deterministic(self):
        spec = ingest.FixtureSpec(2, 4.0, 70.0, 0.25, 0.05, seed=11)
        a = ingest.synth_fixture(spec)
        b = ingest.synth_fixture(spec)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.samples, rb.samples)

    def test_midpoint_silence(self):
        rec = ingest.synth_fixture(self.SPEC)[0]
        # halfway between the S2 at 0.3 s and the next S1 at 1.0 s
        mid = int(0.65 * rec.sample_rate_hz)
        assert abs(rec.samples[mid]) < 1e-6

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ingest.FixtureSpec(1, 10.0, 30.0, 0.3, 0.0, 1)
        with pytest.raises(ValueError):
            ingest.FixtureSpec(1, -1.0, 60.0, 0.3, 0.0, 1)
        with pytest.raises(ValueError):
            ingest.FixtureSpec(1, 10.0, 60.0, 0.3, -0.1, 1)
