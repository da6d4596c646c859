import numpy as np
import pytest
from dataclasses import replace

from pulsewatch.core import SampleSeries, ValidationError
from pulsewatch.segmentation import (
    Pulse, classify_artifact, detect_rpeaks, detect_troughs, segment_pulses,
)
from pulsewatch import synth

FS = 64.0


def series_from(values, rate=FS, start=0.0):
    return SampleSeries("ppg", rate, start, np.asarray(values, dtype=float))


def make_pulse(samples, t_ss=1.0, notch_count=0, clean=True):
    """Hand-built pulse; systolic peak at the sample argmax."""
    samples = np.asarray(samples, dtype=float)
    dt = t_ss / (len(samples) - 1)
    peak = int(np.argmax(samples))
    return Pulse(
        trough_time=0.0, next_trough_time=t_ss,
        systolic_peak_time=peak * dt, systolic_peak_value=float(samples[peak]),
        trough_value=float(samples[0]), notch_count=notch_count,
        samples=samples, clean=clean,
    )


class TestDetectTroughs:
    def test_sixty_bpm_count_and_spacing(self):
        script = synth.PhysioScript(duration=60.0, base_hr=1.0, hrv_lf_amp=0.0,
                                    hrv_hf_amp=0.0, noise_sd=0.0, seed=0)
        rec, _ = synth.generate_with_truth(script)
        troughs = detect_troughs(rec.ppg)
        assert 59 <= len(troughs) <= 61
        spacing = np.diff(troughs)
        assert np.all(np.abs(spacing - 1.0) <= 0.02)

    def test_constant_signal_yields_nothing(self):
        assert detect_troughs(series_from(np.ones(int(FS * 10)))) == []

    def test_known_troughs_recovered(self):
        """Three concatenated beats; the two interior troughs come back
        within one sample."""
        phi = np.linspace(0.0, 1.0, 65)[:-1]
        beat = synth.beat_template(phi, 0.3, 0.22)
        x = np.concatenate([beat, beat, beat, [0.0]])
        troughs = detect_troughs(series_from(x))
        expected = np.array([1.0, 2.0])
        for e in expected:
            assert np.min(np.abs(np.array(troughs) - e)) <= 1.0 / FS + 1e-9

    def test_requires_two_seconds(self):
        with pytest.raises(ValidationError):
            detect_troughs(series_from(np.zeros(int(FS))))

    def test_amplitude_scaling_leaves_times_unchanged(self, clean_recording):
        rec, _ = clean_recording
        scaled = SampleSeries("ppg", rec.ppg.sample_rate, rec.ppg.start_time,
                              rec.ppg.samples * 8.0)
        a = np.array(detect_troughs(rec.ppg))
        b = np.array(detect_troughs(scaled))
        assert len(a) == len(b)
        np.testing.assert_allclose(a, b, atol=1e-9)


class TestSegmentPulses:
    def test_two_pulses_from_three_troughs(self, noiseless_pulses):
        rec, _, _ = noiseless_pulses
        pulses = segment_pulses(rec.ppg, [10.0, 11.0, 12.0])
        assert len(pulses) == 2
        assert pulses[0].t_ss == pytest.approx(1.0)
        assert pulses[1].t_ss == pytest.approx(1.0)

    def test_tiling_invariant(self, segmented):
        _, _, pulses, _ = segmented
        for a, b in zip(pulses[:-1], pulses[1:]):
            assert a.next_trough_time == b.trough_time

    def test_single_peak_pulse_has_no_notch(self):
        t = np.linspace(0.0, 1.0, 65)
        x = np.sin(np.pi * np.concatenate([t, t, t]) ) ** 2
        pulses = segment_pulses(series_from(x), [1.0 + 1 / FS, 2.0 + 2 / FS])
        assert pulses[0].notch_count == 0

    def test_dicrotic_pulse_counts_one_notch(self, noiseless_pulses):
        _, _, pulses = noiseless_pulses
        mid = pulses[len(pulses) // 2]
        assert mid.notch_count == 1
        assert mid.clean

    def test_degenerate_interval_marked_unclean(self, noiseless_pulses):
        rec, _, _ = noiseless_pulses
        pulses = segment_pulses(rec.ppg, [10.0, 10.0 + 2 / FS, 11.0])
        assert pulses[0].clean is False


class TestClassifyArtifact:
    def good_pulse(self):
        phi = np.linspace(0.0, 1.0, 64)
        return make_pulse(synth.beat_template(phi, 0.3, 0.22), notch_count=1)

    def test_three_notches_rejected(self):
        pulse = replace(self.good_pulse(), notch_count=3)
        assert classify_artifact(pulse) is False

    def test_two_notches_accepted(self):
        pulse = replace(self.good_pulse(), notch_count=2)
        assert classify_artifact(pulse) is True

    def test_mid_upstroke_dip_rejected(self):
        phi = np.linspace(0.0, 1.0, 64)
        samples = synth.beat_template(phi, 0.3, 0.22)
        # V-shaped excursion mid-rise: down 10% of amplitude, then recovery.
        floor = samples[8] - 0.10
        samples[8:15] = np.concatenate([
            np.linspace(samples[8], floor, 4)[1:],
            np.linspace(floor, samples[14], 5)[:-1],
        ])
        assert classify_artifact(make_pulse(samples)) is False

    def test_width_bounds(self):
        assert classify_artifact(replace(self.good_pulse(),
                                         next_trough_time=0.2)) is False
        assert classify_artifact(replace(self.good_pulse(),
                                         next_trough_time=2.5)) is False

    def test_affine_rescaling_invariance(self, segmented):
        _, _, pulses, _ = segmented
        rng = np.random.default_rng(7)
        for pulse in pulses[3:60:5]:
            a = rng.uniform(0.2, 9.0)
            b = rng.uniform(-5.0, 5.0)
            moved = replace(
                pulse,
                samples=a * pulse.samples + b,
                systolic_peak_value=a * pulse.systolic_peak_value + b,
                trough_value=a * pulse.trough_value + b,
            )
            assert classify_artifact(moved) == classify_artifact(pulse)


class TestDetectRPeaks:
    def test_count_and_intervals_75bpm(self):
        script = synth.PhysioScript(duration=60.0, base_hr=1.25, hrv_lf_amp=0.0,
                                    hrv_hf_amp=0.0, noise_sd=0.0, seed=2)
        rec, _ = synth.generate_with_truth(script)
        rpeaks = detect_rpeaks(rec.ecg)
        assert 74 <= len(rpeaks) <= 76
        intervals = np.diff(rpeaks.peak_times)
        assert np.all(np.abs(intervals - 0.8) <= 0.01)

    def test_flat_signal_empty(self):
        flat = SampleSeries("ecg", 500.0, 0.0, np.zeros(500 * 5))
        assert len(detect_rpeaks(flat)) == 0

    def test_noisy_peaks_within_10ms(self):
        script = synth.PhysioScript(duration=60.0, base_hr=1.1, hrv_lf_amp=0.02,
                                    hrv_hf_amp=0.03, noise_sd=0.05, seed=9)
        rec, truth = synth.generate_with_truth(script)
        rpeaks = detect_rpeaks(rec.ecg)
        assert len(rpeaks) >= len(truth.rpeak_times) - 2
        for t in rpeaks.peak_times:
            assert np.min(np.abs(truth.rpeak_times - t)) <= 0.010

    def test_irregular_interval_flags(self):
        from pulsewatch.segmentation import RPeakTrain
        train = RPeakTrain(np.array([0.0, 0.8, 1.6, 4.0, 4.8]))
        assert list(train.irregular_intervals()) == [False, False, True, False]
