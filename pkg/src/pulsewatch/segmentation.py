"""PPG trough detection, pulse segmentation, artifact rejection, ECG R peaks."""

from __future__ import annotations

from dataclasses import dataclass, replace
import numpy as np
from scipy.signal import find_peaks

from .core import SampleSeries, ValidationError, time_of

TROUGH_SMOOTH_S = 0.1          # moving-average window for trough detection
TROUGH_MIN_SEPARATION_S = 0.25
TROUGH_DEPTH_FRAC = 0.35       # candidate must sit in the bottom 35% of the local swing
TROUGH_LOCAL_WINDOW_S = 1.5
NOTCH_SMOOTH_S = 0.08          # light smoothing before counting dicrotic notches
NOTCH_PROMINENCE_FRAC = 0.02   # notch must rise >=2% of pulse amplitude
UPSTROKE_DIP_FRAC = 0.01       # tolerated single-sample dip on the upstroke
TSS_MIN_S = 0.25               # physiological pulse-width bounds for clean pulses
TSS_MAX_S = 2.0

RPEAK_SMOOTH_S = 0.020         # pre-difference smoothing; the band emphasis
RPEAK_INTEGRATION_S = 0.150
RPEAK_REFRACTORY_S = 0.200
RPEAK_THRESHOLD_FRAC = 0.5     # accept integrated peaks above 0.5x running peak average


@dataclass(frozen=True)
class Pulse:
    """One PPG beat cut trough-to-trough, with fiducials and a clean flag.

    ``samples`` covers [trough, next trough] inclusive, so the sample step is
    ``t_ss / (len(samples) - 1)``.
    """

    trough_time: float
    next_trough_time: float
    systolic_peak_time: float
    systolic_peak_value: float
    trough_value: float
    notch_count: int
    samples: np.ndarray
    clean: bool

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def t_ss(self) -> float:
        return self.next_trough_time - self.trough_time

    @property
    def sample_step(self) -> float:
        return self.t_ss / (len(self.samples) - 1)

    @property
    def amplitude(self) -> float:
        return self.systolic_peak_value - self.trough_value


@dataclass(frozen=True)
class RPeakTrain:
    peak_times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.peak_times, dtype=float)
        times.setflags(write=False)
        object.__setattr__(self, "peak_times", times)

    def __len__(self) -> int:
        return len(self.peak_times)

    def irregular_intervals(self) -> np.ndarray:
        """Flags successive intervals outside the 0.25-2.0 s physiological band."""
        d = np.diff(self.peak_times)
        return (d < TSS_MIN_S) | (d > TSS_MAX_S)


def _smooth(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with edge-replicated padding (length preserved)."""
    window = max(3, int(window))
    if window % 2 == 0:
        window += 1
    half = window // 2
    padded = np.pad(x, half, mode="edge")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(padded, kernel, mode="valid")


def _refine_trough(s: np.ndarray, idx: int, half_window: int) -> float:
    """Sub-sample trough position from the intersection of its V legs.

    The legs are fitted on the smoothed signal at offsets beyond the
    smoothing half-window, where a moving average of a piecewise-linear V
    reproduces the leg lines exactly; their intersection localizes the
    minimum well below the noise floor.  Falls back to the candidate index
    near array edges or when the neighborhood is not V-shaped.
    """
    inner = half_window
    outer = inner + 6
    if idx - outer < 0 or idx + outer >= len(s):
        return float(idx)
    left = np.arange(idx - outer, idx - inner + 1)
    right = np.arange(idx + inner, idx + outer + 1)
    m1, b1 = np.polyfit(left, s[left], 1)
    m2, b2 = np.polyfit(right, s[right], 1)
    if m1 >= 0 or m2 <= 0:
        return float(idx)
    star = (b1 - b2) / (m2 - m1)
    if abs(star - idx) > 3:
        return float(idx)
    return float(star)


def detect_troughs(ppg: SampleSeries) -> list[float]:
    """Diastolic trough times.

    Smooths with a 0.1 s moving average, takes the first difference, and finds
    downward-to-upward zero crossings; each candidate is the minimum of the
    smoothed signal between successive crossings.  Candidates that do not sit
    near the local signal floor (dicrotic-notch minima, noise dips on flat
    tops) are discarded, then minima closer than 0.25 s are merged keeping
    the lower one.
    """
    x = ppg.samples
    fs = ppg.sample_rate
    if len(x) < 2 * fs:
        raise ValidationError("need at least 2 s of PPG for trough detection")

    window = round(TROUGH_SMOOTH_S * fs)
    s = _smooth(x, window)
    d = np.diff(s)
    crossing = np.flatnonzero((d[:-1] < 0) & (d[1:] >= 0)) + 1
    if len(crossing) == 0:
        return []

    if len(crossing) == 1:
        candidates = [int(crossing[0])]
    else:
        candidates = []
        for a, b in zip(crossing[:-1], crossing[1:]):
            candidates.append(a + int(np.argmin(s[a : b + 1])))
        candidates = sorted(set(candidates))

    half = round(TROUGH_LOCAL_WINDOW_S * fs)
    deep = []
    for idx in candidates:
        neighborhood = s[max(0, idx - half) : idx + half + 1]
        lo, hi = float(neighborhood.min()), float(neighborhood.max())
        if hi <= lo or s[idx] <= lo + TROUGH_DEPTH_FRAC * (hi - lo):
            deep.append(idx)

    min_gap = TROUGH_MIN_SEPARATION_S * fs
    kept: list[int] = []
    for idx in deep:
        if kept and idx - kept[-1] < min_gap:
            if s[idx] < s[kept[-1]]:
                kept[-1] = idx
        else:
            kept.append(idx)
    half_window = max(3, window if window % 2 else window + 1) // 2
    refined = sorted({_refine_trough(s, i, half_window) for i in kept})
    return [ppg.start_time + pos / fs for pos in refined]


def _count_notches(samples: np.ndarray, peak_idx: int, amplitude: float, fs: float) -> int:
    """Local maxima strictly after the systolic peak with prominence >=2% of PA.

    Counting happens on a lightly smoothed copy so single-sample jitter does
    not register as a notch.
    """
    smoothed = _smooth(samples, round(NOTCH_SMOOTH_S * fs))
    tail = smoothed[peak_idx + 1 :]
    if len(tail) < 3 or amplitude <= 0:
        return 0
    peaks, _ = find_peaks(tail, prominence=NOTCH_PROMINENCE_FRAC * amplitude)
    return int(len(peaks))


def segment_pulses(ppg: SampleSeries, troughs: list[float]) -> list[Pulse]:
    """One Pulse per consecutive trough pair.

    The systolic peak is the global maximum strictly inside the interval;
    notch_count counts catacrotic local maxima.  Intervals shorter than 4
    samples are kept but marked not clean.
    """
    if len(troughs) < 2:
        raise ValidationError("need at least 2 troughs to segment pulses")
    fs = ppg.sample_rate
    pulses = []
    for t0, t1 in zip(troughs[:-1], troughs[1:]):
        i0 = ppg.index_at(t0)
        i1 = ppg.index_at(t1)
        samples = ppg.samples[i0 : i1 + 1]
        if len(samples) < 4:
            mid = max(i0 + 1, min(i1 - 1, (i0 + i1) // 2))
            pulse = Pulse(
                trough_time=time_of(ppg, i0),
                next_trough_time=time_of(ppg, i1),
                systolic_peak_time=time_of(ppg, mid),
                systolic_peak_value=float(ppg.samples[mid]),
                trough_value=float(ppg.samples[i0]),
                notch_count=0,
                samples=samples,
                clean=False,
            )
            pulses.append(pulse)
            continue
        peak_rel = 1 + int(np.argmax(samples[1:-1]))
        trough_value = float(samples[0])
        peak_value = float(samples[peak_rel])
        notch_count = _count_notches(samples, peak_rel, peak_value - trough_value, fs)
        pulse = Pulse(
            trough_time=time_of(ppg, i0),
            next_trough_time=time_of(ppg, i1),
            systolic_peak_time=time_of(ppg, i0 + peak_rel),
            systolic_peak_value=peak_value,
            trough_value=trough_value,
            notch_count=notch_count,
            samples=samples,
            clean=True,
        )
        pulses.append(replace(pulse, clean=classify_artifact(pulse)))
    return pulses


def classify_artifact(pulse: Pulse) -> bool:
    """True when a pulse is clean.

    Clean means: monotone systolic upstroke (dips up to 1% of the pulse
    amplitude are tolerated), at most two dicrotic notches, and a pulse width
    inside [0.25, 2.0] s.  The monotonicity check runs on a lightly smoothed
    copy, stopping one smoothing window short of the crest, so isolated
    sample jitter on the rising limb or the flat peak cannot flip the
    verdict.  Positive affine rescaling of the samples cannot change the
    outcome because every threshold is relative to the pulse amplitude.
    """
    if len(pulse.samples) < 4:
        return False
    if not TSS_MIN_S <= pulse.t_ss <= TSS_MAX_S:
        return False
    if pulse.notch_count > 2:
        return False
    amplitude = pulse.amplitude
    if amplitude <= 0:
        return False
    fs_equiv = (len(pulse.samples) - 1) / pulse.t_ss
    window = max(3, round(NOTCH_SMOOTH_S * fs_equiv))
    smoothed = _smooth(pulse.samples, window)
    peak_rel = int(round((pulse.systolic_peak_time - pulse.trough_time) / pulse.sample_step))
    # Boundary jitter may place the cut a sample before the true trough, so
    # the rise is measured from the sampled minimum near the start; the flat
    # crest is likewise excluded.
    start = int(np.argmin(smoothed[: window + 1]))
    stop = min(peak_rel, int(np.argmax(smoothed[: peak_rel + 2]))) - window // 2
    if stop < start + 2:
        stop = min(start + 2, len(smoothed) - 1)
    dips = np.diff(smoothed[start : stop + 1])
    return bool(np.all(dips >= -UPSTROKE_DIP_FRAC * amplitude))


def detect_rpeaks(ecg: SampleSeries) -> RPeakTrain:
    """R-peak times via band emphasis (smoothed difference filter), squaring,
    150 ms moving-window integration, adaptive threshold at 0.5x the running
    peak average, and a 200 ms refractory period.  Peak locations are refined
    on the raw signal.
    """
    x = ecg.samples
    fs = ecg.sample_rate
    if len(x) < 2 * fs:
        raise ValidationError("need at least 2 s of ECG for R-peak detection")

    d = np.diff(_smooth(x, round(RPEAK_SMOOTH_S * fs)))
    sq = d * d
    window = max(1, round(RPEAK_INTEGRATION_S * fs))
    integ = np.convolve(sq, np.full(window, 1.0 / window), mode="same")

    refractory = round(RPEAK_REFRACTORY_S * fs)
    cand, _ = find_peaks(integ, distance=max(1, refractory))
    if len(cand) == 0:
        return RPeakTrain(np.empty(0))

    # Seed the running peak average from the strongest candidate in the first
    # two seconds so the threshold starts at a physiological scale.
    head = cand[cand < 2 * fs]
    running = float(integ[head].max()) if len(head) else float(integ[cand[0]])

    refine = round(RPEAK_INTEGRATION_S * fs)
    accepted: list[int] = []
    last = -10 * fs
    for idx in cand:
        if idx - last < refractory:
            continue
        if integ[idx] >= RPEAK_THRESHOLD_FRAC * running:
            lo = max(0, idx - refine)
            hi = min(len(x), idx + refine + 1)
            peak_idx = lo + int(np.argmax(x[lo:hi]))
            if not accepted or peak_idx - accepted[-1] >= refractory:
                accepted.append(peak_idx)
                last = idx
            running = 0.875 * running + 0.125 * float(integ[idx])
    times = np.array([time_of(ecg, i) for i in accepted])
    return RPeakTrain(times)
