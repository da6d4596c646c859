import numpy as np
import pytest

from pulsewatch.core import SampleSeries
from pulsewatch.sync import (
    AlignmentFailedError, ClockModel, StampNotFoundError, apply_clock,
    detect_stamps, fit_clock,
)


def square_train(start, rate, n_pulses=10, duration=25.0, noise=0.0, seed=0):
    t = np.arange(int(duration * rate)) / rate
    x = np.zeros(len(t))
    for k in range(n_pulses):
        x[(t >= start + k) & (t < start + k + 0.5)] = 5.0
    if noise:
        x = x + np.random.default_rng(seed).normal(0.0, noise * 5.0, len(x))
    return SampleSeries("stamp", rate, 0.0, x)


def test_detect_ideal_train():
    train = detect_stamps(square_train(5.0, 64.0), 0.5)
    assert len(train) == 10
    np.testing.assert_allclose(train.edge_times, 5.0 + np.arange(10), atol=1 / 64)


def test_detect_noisy_train_within_one_sample():
    train = detect_stamps(square_train(5.0, 64.0, noise=0.10, seed=3), 0.5)
    assert len(train) == 10
    np.testing.assert_allclose(train.edge_times, 5.0 + np.arange(10), atol=1.01 / 64)


def test_flat_signal_raises():
    flat = SampleSeries("stamp", 64.0, 0.0, np.zeros(64 * 20))
    with pytest.raises(StampNotFoundError):
        detect_stamps(flat, 0.5)


def test_fit_identity_is_exact():
    a = detect_stamps(square_train(5.0, 500.0), 0.5, "analog")
    b = detect_stamps(square_train(7.0, 500.0), 0.5, "analog")
    fit = fit_clock((a, a), (b, b))
    assert fit.model.offset == 0.0
    assert fit.model.drift == 0.0
    assert fit.residual_s == 0.0


def test_fit_pure_offset():
    opt0 = detect_stamps(square_train(8.5, 64.0), 0.5, "optical")
    ana0 = detect_stamps(square_train(5.0, 500.0), 0.5, "analog")
    opt1 = detect_stamps(square_train(8.5, 64.0), 0.5, "optical")
    ana1 = detect_stamps(square_train(5.0, 500.0), 0.5, "analog")
    fit = fit_clock((opt0, ana0), (opt1, ana1))
    assert abs(fit.model.offset - 3.5) <= 1 / 64
    assert abs(fit.model.drift) < 1e-4


def test_fit_recovers_drift():
    """Start shifted +1.0 s, end one hour later shifted +1.0036 s.

    Oracle: the two-point line through (t, shift) pairs has slope
    0.0036/3600 = 1e-6, so drift must come out 1e-6 within 2e-7.
    """
    rate = 500.0
    ana0 = detect_stamps(square_train(5.0, rate), 0.5, "analog")
    opt0_series = SampleSeries("o", rate, 0.0, square_train(6.0, rate).samples)
    opt0 = detect_stamps(opt0_series, 0.5, "optical")
    base1 = square_train(5.0, rate)
    ana1 = detect_stamps(SampleSeries("a", rate, 3600.0, base1.samples), 0.5, "analog")
    opt1 = detect_stamps(SampleSeries("o", rate, 3600.0 + 0.0036,
                                      square_train(6.0, rate).samples), 0.5, "optical")
    fit = fit_clock((opt0, ana0), (opt1, ana1))
    assert abs(fit.model.drift - 1e-6) <= 2e-7
    assert abs(fit.model.offset - 1.0) < 0.01


def test_fit_rejects_misaligned_trains():
    opt = detect_stamps(square_train(5.0, 64.0, n_pulses=7), 0.5, "optical")
    ana = detect_stamps(square_train(5.3, 500.0, n_pulses=10), 0.5, "analog")
    # Rank matching pairs edge i with edge i, so a missing leading edge on one
    # side produces a large residual rather than a silent bad fit.
    bad_opt = detect_stamps(square_train(6.45, 64.0, n_pulses=9), 0.5, "optical")
    with pytest.raises(AlignmentFailedError):
        fit_clock((bad_opt, ana), (opt, ana))


def test_translation_equivariance():
    """Shifting both trains by the same amount leaves the offset unchanged."""
    opt0 = detect_stamps(square_train(8.5, 64.0), 0.5, "optical")
    ana0 = detect_stamps(square_train(5.0, 500.0), 0.5, "analog")
    delta = 123.0
    opt0s = detect_stamps(SampleSeries("o", 64.0, delta, square_train(8.5, 64.0).samples),
                          0.5, "optical")
    ana0s = detect_stamps(SampleSeries("a", 500.0, delta, square_train(5.0, 500.0).samples),
                          0.5, "analog")
    f0 = fit_clock((opt0, ana0), (opt0, ana0))
    f1 = fit_clock((opt0s, ana0s), (opt0s, ana0s))
    assert abs(f0.model.offset - f1.model.offset) < 1e-9


def test_apply_identity():
    series = SampleSeries("ppg", 64.0, 100.0, np.arange(10.0))
    out = apply_clock(series, ClockModel(0.0, 0.0))
    assert out.start_time == series.start_time
    assert out.sample_rate == series.sample_rate
    np.testing.assert_array_equal(out.samples, series.samples)


def test_apply_pure_shift():
    series = SampleSeries("ppg", 64.0, 100.0, np.arange(10.0))
    out = apply_clock(series, ClockModel(2.0, 0.0))
    assert out.start_time == 98.0


def test_apply_roundtrip_inverse():
    series = SampleSeries("ppg", 64.0, 123.456, np.arange(100.0))
    model = ClockModel(offset=3.25, drift=4.2e-5)
    back = apply_clock(apply_clock(series, model), model.inverse())
    assert abs(back.start_time - series.start_time) < 1e-9
    assert abs(back.sample_rate - series.sample_rate) < 1e-9


def test_apply_scales_spacing_by_drift_factor():
    series = SampleSeries("ppg", 64.0, 0.0, np.arange(10.0))
    model = ClockModel(offset=0.0, drift=5e-4)
    out = apply_clock(series, model)
    spacing = 1.0 / out.sample_rate
    assert spacing == pytest.approx((1.0 / 64.0) / (1.0 + 5e-4))
