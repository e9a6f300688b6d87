import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mova.metrics import (
    ExtractionReport,
    TrackingReport,
    aggregate,
    angular_error,
    frame_accuracy,
    si_sdr,
    write_summary_csv,
    write_summary_json,
)


class TestSiSdr:
    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        ref = rng.standard_normal(8000)
        est = ref + 0.1 * rng.standard_normal(8000)
        base = si_sdr(est, ref)
        for scale in (1e-3, 0.5, 7.0, 1e3):
            assert abs(si_sdr(scale * est, ref) - base) < 1e-9

    def test_equal_power_orthogonal_noise_is_zero_db(self):
        rng = np.random.default_rng(1)
        ref = rng.standard_normal(200000)
        noise = rng.standard_normal(200000)
        # project out the reference component, then match power exactly
        noise -= np.dot(noise, ref) / np.dot(ref, ref) * ref
        noise *= np.linalg.norm(ref) / np.linalg.norm(noise)
        assert abs(si_sdr(ref + noise, ref)) < 0.1

    def test_identical_signals_hit_cap(self):
        x = np.sin(np.arange(1000) * 0.01)
        assert si_sdr(x, x) == 60.0

    def test_zero_estimate_hits_negative_cap(self):
        ref = np.ones(100)
        assert si_sdr(np.zeros(100), ref) == -60.0

    def test_silent_reference_rejected(self):
        with pytest.raises(ValueError):
            si_sdr(np.ones(10), np.zeros(10))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            si_sdr(np.ones(10), np.ones(11))


class TestAngularError:
    def test_wraparound_case(self):
        assert angular_error(10.0, 350.0) == pytest.approx(20.0)

    @given(st.floats(0, 360, exclude_max=True), st.floats(0, 360, exclude_max=True))
    def test_symmetry_and_range(self, a, b):
        e = angular_error(a, b)
        assert 0.0 <= e <= 180.0
        assert e == pytest.approx(angular_error(b, a))

    @given(st.floats(0, 360, exclude_max=True), st.floats(-1080, 1080))
    def test_rotation_invariance(self, a, shift):
        e1 = angular_error(a, a + shift)
        e2 = angular_error(0.0, shift)
        assert e1 == pytest.approx(e2, abs=1e-6)

    def test_vectorized(self):
        out = angular_error([0.0, 90.0, 350.0], [359.0, 100.0, 10.0])
        np.testing.assert_allclose(out, [1.0, 10.0, 20.0])


class TestFrameAccuracy:
    def test_inclusive_margin_boundary(self):
        assert frame_accuracy([10.0], [15.0], margin=5.0) == 1.0
        assert frame_accuracy([10.0], [15.0001], margin=5.0) == 0.0

    @given(st.lists(st.floats(0, 360, exclude_max=True), min_size=2, max_size=20))
    def test_monotone_in_margin(self, thetas):
        truth = np.zeros(len(thetas))
        accs = [frame_accuracy(thetas, truth, margin=m) for m in (1, 5, 20, 90, 180)]
        assert all(a <= b for a, b in zip(accs, accs[1:]))
        assert accs[-1] == 1.0


def _tracking_reports():
    return [
        TrackingReport("a", 0.0, 1.0, 0.5, 0.2, 1.0),
        TrackingReport("b", 0.0, 0.9, 1.5, 0.5, 3.0),
        TrackingReport("c", 180.0, 0.4, 20.0, 5.0, 40.0),
    ]


def _extraction_reports():
    return [
        ExtractionReport("a", 0.0, 12.0, -5.0),
        ExtractionReport("c", 180.0, 3.0, -6.0),
    ]


class TestAggregate:
    def test_groups_by_condition(self):
        summaries = aggregate(_tracking_reports(), _extraction_reports())
        assert [s.condition for s in summaries] == [0.0, 180.0]
        assert summaries[0].accuracy == pytest.approx(0.95)
        assert summaries[0].mean_si_sdr_db == pytest.approx(12.0)
        assert summaries[1].mean_si_sdr_improvement_db == pytest.approx(9.0)

    def test_permutation_invariant(self):
        a = aggregate(_tracking_reports(), _extraction_reports())
        b = aggregate(_tracking_reports()[::-1], _extraction_reports()[::-1])
        assert a == b

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], [])

    def test_summary_files(self, tmp_path):
        summaries = aggregate(_tracking_reports(), _extraction_reports())
        write_summary_json(tmp_path / "s.json", summaries)
        write_summary_csv(tmp_path / "s.csv", summaries)
        assert (tmp_path / "s.json").stat().st_size > 0
        lines = (tmp_path / "s.csv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 conditions
