import numpy as np
import pytest

from pulsewatch.core import (
    Recording, SampleSeries, SeizureAnnotation, ValidationError,
    baseline_mask_intervals, time_of,
)


def make_series(n=256, rate=64.0, start=0.0):
    return SampleSeries("ppg", rate, start, np.zeros(n))


def test_time_of_uniform_sampling():
    assert time_of(make_series(rate=64.0), 64) == 1.0


def test_time_of_identity_start():
    assert time_of(make_series(rate=500.0, start=10.0), 0) == 10.0


def test_time_of_fractional():
    assert time_of(make_series(rate=64.0), 96) == 1.5


def test_time_of_out_of_range():
    with pytest.raises(IndexError):
        time_of(make_series(n=10), 10)


def test_time_of_strictly_increasing():
    s = make_series(n=100, rate=37.0, start=2.5)
    times = [time_of(s, i) for i in range(100)]
    assert np.all(np.diff(times) > 0)


def test_sample_rate_must_be_positive():
    with pytest.raises(ValidationError):
        SampleSeries("x", 0.0, 0.0, np.zeros(4))


def test_annotation_ordering_enforced():
    with pytest.raises(ValidationError):
        SeizureAnnotation(onset=10.0, offset=10.0)


def test_recording_rejects_annotation_outside_span():
    ppg = make_series(n=640, rate=64.0)  # 10 s
    with pytest.raises(ValidationError):
        Recording(ppg=ppg, annotations=(SeizureAnnotation(5.0, 20.0),))


def test_recording_rejects_overlapping_annotations():
    ppg = make_series(n=64 * 100, rate=64.0)
    with pytest.raises(ValidationError):
        Recording(ppg=ppg, annotations=(
            SeizureAnnotation(10.0, 30.0), SeizureAnnotation(20.0, 40.0)))


class TestBaselineMask:
    seizure = [SeizureAnnotation(3600.0, 3660.0)]

    def test_pulse_well_before_onset_is_baseline(self):
        mask = baseline_mask_intervals([2599.0], [2600.0], self.seizure)
        assert mask[0]

    def test_pulse_near_onset_excluded(self):
        mask = baseline_mask_intervals([3000.0], [3001.0], self.seizure)
        assert not mask[0]

    def test_pulse_after_post_margin_is_baseline(self):
        mask = baseline_mask_intervals([3965.0], [3966.0], self.seizure)
        assert mask[0]

    def test_no_annotations_means_all_baseline(self):
        mask = baseline_mask_intervals(np.arange(10.0), np.arange(10.0) + 1, [])
        assert mask.all()

    def test_applied_against_every_seizure(self):
        two = [SeizureAnnotation(1000.0, 1060.0), SeizureAnnotation(5000.0, 5060.0)]
        # Baseline w.r.t. the first seizure but inside the pre-window of the second.
        mask = baseline_mask_intervals([4500.0], [4501.0], two)
        assert not mask[0]

    def test_monotone_in_margins(self):
        """Shrinking the exclusion margins never turns True into False."""
        rng = np.random.default_rng(0)
        starts = np.sort(rng.uniform(0, 8000, 200))
        ends = starts + rng.uniform(0.5, 1.5, 200)
        wide = baseline_mask_intervals(starts, ends, self.seizure)

        shrunk = [SeizureAnnotation(3600.0, 3660.0)]
        narrow = np.ones(len(starts), dtype=bool)
        for a in shrunk:  # margins halved by hand
            narrow &= (ends < a.onset - 450.0) | (starts > a.offset + 150.0)
        assert np.all(narrow[wide])  # wide True implies narrow True
