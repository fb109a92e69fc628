import numpy as np
import pytest

from pcgsynth import ingest, quality
from pcgsynth.nn.params import make_rng
from pcgsynth.quality import Criterion, QualityThresholds


class TestRmssd:
    def test_constant(self):
        assert quality.rmssd(np.full(50, 0.7)) == 0.0

    def test_alternating(self):
        assert quality.rmssd([0, 1, 0, 1]) == pytest.approx(1.0, abs=1e-15)

    def test_threshold_case(self):
        # diffs {0.3, -0.3}: rmssd exactly 0.3, which is >= 0.1 and so fails
        value = quality.rmssd([0.0, 0.3, 0.0])
        assert value == pytest.approx(0.3, abs=1e-15)
        assert value >= QualityThresholds().rmssd_max

    def test_too_short(self):
        with pytest.raises(ValueError):
            quality.rmssd([1.0])

    def test_scale_equivariant(self):
        rng = make_rng(1)
        x = rng.standard_normal(100)
        assert quality.rmssd(-2.5 * x) == pytest.approx(2.5 * quality.rmssd(x), rel=1e-12)


class TestZeroCrossingRatio:
    def test_all_positive(self):
        assert quality.zero_crossing_ratio([1.0, 2.0, 0.5, 3.0]) == 0.0

    def test_alternating(self):
        assert quality.zero_crossing_ratio([1, -1, 1, -1]) == 0.75

    def test_partial(self):
        assert quality.zero_crossing_ratio([1, -1, 1, 1]) == 0.5

    def test_exact_zero_carries_previous_sign(self):
        # one pass through zero counts once, not twice
        assert quality.zero_crossing_ratio([1.0, 0.0, -1.0, -1.0]) == 0.25

    def test_too_short(self):
        with pytest.raises(ValueError):
            quality.zero_crossing_ratio([0.5])

    def test_scale_invariant(self):
        rng = make_rng(2)
        x = rng.standard_normal(200)
        assert quality.zero_crossing_ratio(3.7 * x) == quality.zero_crossing_ratio(x)


def clean_fixture(duration_s=4.4, noise_std=0.0, seed=3):
    spec = ingest.FixtureSpec(1, duration_s, 60.0, 0.3, noise_std, seed)
    return ingest.synth_fixture(spec)[0]


class TestPeakWindowRatio:
    def test_clean_fixture_all_windows_good(self):
        rec = clean_fixture()
        ratio = quality.peak_window_ratio(rec.samples, rec.sample_rate_hz)
        assert ratio == 1.0

    def test_white_noise_overruns_range(self):
        rng = make_rng(9)
        noise = rng.normal(0.0, 1.0, size=4 * 4000)
        assert quality.peak_window_ratio(noise, 4000) == 0.0

    def test_flat_zero_has_no_peaks(self):
        assert quality.peak_window_ratio(np.zeros(3 * 4000), 4000) == 0.0

    def test_too_short(self):
        with pytest.raises(ValueError):
            quality.peak_window_ratio(np.zeros(4000), 4000)  # < 2200 ms


class TestAssess:
    def test_clean_fixture_passes(self):
        rec = clean_fixture(duration_s=8.0)
        report = quality.assess(rec)
        assert report.passed
        assert report.failed_criteria == set()

    def test_heavy_noise_fails_zcr(self):
        rec = clean_fixture(duration_s=8.0, noise_std=0.5)
        report = quality.assess(rec)
        assert not report.passed
        assert Criterion.ZCR in report.failed_criteria

    def test_constant_zero_fails_peak_windows_only(self):
        rec = ingest.Recording("z", 4000, np.zeros(4 * 4000))
        report = quality.assess(rec)
        assert report.failed_criteria == {Criterion.PEAK_WINDOWS}
        assert report.rmssd == 0.0
        assert report.zcr == 0.0

    def test_boundary_semantics(self):
        # rmssd exactly at the threshold fails; zcr exactly at it passes
        x = np.tile([0.0, 0.1], 5 * 4400)
        assert quality.rmssd(x) >= 0.1
        rec = clean_fixture(duration_s=8.0)
        thresholds = QualityThresholds(zcr_max=quality.zero_crossing_ratio(rec.samples))
        assert Criterion.ZCR not in quality.assess(rec, thresholds).failed_criteria

    def test_tightening_never_flips_fail_to_pass(self):
        rec = clean_fixture(duration_s=8.0, noise_std=0.5)
        loose = quality.assess(rec)
        tight = quality.assess(rec, QualityThresholds(rmssd_max=0.05, zcr_max=0.2,
                                                      peak_window_min_fraction=0.8))
        assert loose.failed_criteria <= tight.failed_criteria


def test_quality_csv_export(tmp_path):
    rec = clean_fixture(duration_s=8.0)
    entries = [("a", quality.assess(rec))]
    path = tmp_path / "qc.csv"
    quality.write_quality_csv(path, entries)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "subject_id,rmssd,zcr,peak_window_ratio,pass,failed_criteria"
    assert lines[1].startswith("a,")
    assert ",true," in lines[1]
