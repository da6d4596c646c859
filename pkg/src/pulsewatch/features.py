"""Per-pulse morphological features.

Twelve features per clean pulse: seven heart-rate-variability features
(HR, SDNN, RMSSD, NN50, LFnorm, HFnorm, LF/HF) and five hemodynamic
features (PA, tNCT, PTT, tNMV, PCA1).  Windowed statistics restart at each
5-minute analysis segment; spectral features use a trailing 120 s window of
beat times; PCA1 projects each pulse's second-difference shape onto the
first principal component of the interictal baseline shapes.

Undefined values are NaN and propagate as gaps, never as zeros.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .core import DataError, NumericError
from .segmentation import Pulse, RPeakTrain

FEATURE_NAMES = (
    "HR", "SDNN", "RMSSD", "NN50", "LF", "HF", "LFHF",
    "PA", "tNCT", "PTT", "tNMV", "PCA1",
)
HRV_FEATURES = FEATURE_NAMES[:7]
HEMODYNAMIC_FEATURES = FEATURE_NAMES[7:]

NN50_THRESHOLD_S = 0.050
LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)
SPECTRAL_GRID_STEP_HZ = 0.005
SPECTRAL_MAX_HZ = 0.40
DEFAULT_SPECTRAL_WINDOW_S = 120.0
MIN_SPECTRAL_PULSES = 30
DEFAULT_SEGMENT_LENGTH_S = 300.0
DEFAULT_PCA_RESAMPLE = 100
MIN_BASELINE_PULSES = 10
PTT_MAX_LOOKBACK_S = 1.5


class InsufficientBaselineError(DataError):
    pass


@dataclass(frozen=True)
class FeatureSeries:
    """Defined values of one feature, time-indexed per pulse."""

    feature_name: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if len(times) != len(values):
            raise ValueError("times and values must have equal length")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.times)


class FeatureTable:
    """Column-aligned per-pulse feature values with NaN gaps.

    Rows correspond to clean pulses; ``times`` holds their trough times.
    """

    def __init__(self, times: np.ndarray, columns: dict[str, np.ndarray],
                 pulse_widths: np.ndarray | None = None):
        self.times = np.asarray(times, dtype=float)
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        self.pulse_widths = (np.asarray(pulse_widths, dtype=float)
                             if pulse_widths is not None else None)

    def __len__(self) -> int:
        return len(self.times)

    def series(self, name: str) -> FeatureSeries:
        v = self.columns[name]
        defined = np.isfinite(v)
        return FeatureSeries(name, self.times[defined], v[defined])

    def matrix(self, names=FEATURE_NAMES) -> np.ndarray:
        return np.column_stack([self.columns[n] for n in names])


# --------------------------------------------------------------------------
# HRV statistics


def hr_from_widths(widths: np.ndarray) -> np.ndarray:
    """Heart rate in Hz: reciprocal of each pulse width."""
    return 1.0 / np.asarray(widths, dtype=float)


def sdnn(widths) -> float:
    """Population standard deviation of pulse widths (NaN below 2 widths)."""
    w = np.asarray(widths, dtype=float)
    if len(w) < 2:
        return float("nan")
    return float(np.sqrt(np.mean((w - w.mean()) ** 2)))


def rmssd(widths) -> float:
    """Root mean square of successive pulse-width differences."""
    w = np.asarray(widths, dtype=float)
    if len(w) < 2:
        return float("nan")
    d = np.diff(w)
    return float(np.sqrt(np.mean(d * d)))


def nn50(widths) -> int:
    """Count of successive width differences strictly above 50 ms."""
    w = np.asarray(widths, dtype=float)
    if len(w) < 2:
        return 0
    return int(np.sum(np.abs(np.diff(w)) > NN50_THRESHOLD_S))


def spectral_grid() -> np.ndarray:
    n = int(round(SPECTRAL_MAX_HZ / SPECTRAL_GRID_STEP_HZ))
    return np.arange(1, n + 1) * SPECTRAL_GRID_STEP_HZ


def least_squares_periodogram(times, values, freqs) -> np.ndarray:
    """Lomb-Scargle power of a mean-centered series on unevenly spaced times.

    Equivalent to fitting a*cos + b*sin at each frequency by least squares.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    y = y - y.mean()
    omega = 2.0 * np.pi * np.asarray(freqs, dtype=float)[:, None]  # (m, 1)
    two_wt = 2.0 * omega * t[None, :]
    tau = np.arctan2(np.sum(np.sin(two_wt), axis=1),
                     np.sum(np.cos(two_wt), axis=1)) / (2.0 * omega[:, 0])
    arg = omega * (t[None, :] - tau[:, None])
    c, s = np.cos(arg), np.sin(arg)
    cc = np.sum(c * c, axis=1)
    ss = np.sum(s * s, axis=1)
    yc = (c @ y) ** 2
    ys = (s @ y) ** 2
    power = np.zeros(len(omega))
    np.divide(yc, cc, out=power, where=cc > 0)
    tmp = np.zeros(len(omega))
    np.divide(ys, ss, out=tmp, where=ss > 0)
    return 0.5 * (power + tmp)


def spectral_hrv(times, hr_values) -> tuple[float, float, float]:
    """(LFnorm, HFnorm, LF/HF) of the beat-indexed heart-rate series.

    Powers come from the least-squares periodogram on a 0.005 Hz grid up to
    0.4 Hz; norms divide by the total power on the grid.  All three are NaN
    when total power vanishes; LF/HF is NaN when the HF band is empty.
    """
    t = np.asarray(times, dtype=float)
    if len(t) < 4:
        return (float("nan"),) * 3
    freqs = spectral_grid()
    power = least_squares_periodogram(t, hr_values, freqs)
    total = float(power.sum())
    if total <= 0:
        return (float("nan"),) * 3
    lf_mask = (freqs >= LF_BAND[0]) & (freqs < LF_BAND[1])
    hf_mask = (freqs >= HF_BAND[0]) & (freqs <= HF_BAND[1])
    lf = float(power[lf_mask].sum())
    hf = float(power[hf_mask].sum())
    lfhf = lf / hf if hf > 0 else float("nan")
    return lf / total, hf / total, lfhf


# --------------------------------------------------------------------------
# Hemodynamic features


def pulse_amplitude(pulse: Pulse) -> float:
    """Systolic peak height above the pulse's own diastolic trough."""
    return pulse.systolic_peak_value - pulse.trough_value


def normalized_crest_time(pulse: Pulse) -> float:
    """Trough-to-peak time as a fraction of the pulse width."""
    return (pulse.systolic_peak_time - pulse.trough_time) / pulse.t_ss


def pulse_transit_time(pulse: Pulse, rpeaks: RPeakTrain) -> float:
    """Latest-R-to-trough interval normalized by pulse width.

    NaN when no R peak lies within 1.5 s before the trough.
    """
    peaks = rpeaks.peak_times
    i = int(np.searchsorted(peaks, pulse.trough_time)) - 1
    if i < 0:
        return float("nan")
    t_rs = pulse.trough_time - peaks[i]
    if t_rs <= 0 or t_rs > PTT_MAX_LOOKBACK_S:
        return float("nan")
    return t_rs / pulse.t_ss


def normalized_max_velocity_time(pulse: Pulse) -> float:
    """Time to the steepest point of the systolic upstroke, as a fraction of
    the pulse width.

    The first difference between samples j and j+1 is read as the slope at
    their midpoint; a 3-point average tames argmax jitter on flat-topped
    velocity profiles.
    """
    dt = pulse.sample_step
    peak_rel = int(round((pulse.systolic_peak_time - pulse.trough_time) / dt))
    upstroke = pulse.samples[: peak_rel + 1]
    if len(upstroke) < 2:
        return float("nan")
    v = np.diff(upstroke)
    if len(v) >= 3:
        v = np.convolve(v, np.ones(3) / 3.0, mode="same")
    t_sa = (int(np.argmax(v)) + 0.5) * dt
    return t_sa / pulse.t_ss


# --------------------------------------------------------------------------
# Baseline PCA of second-difference pulse shapes


def symmetric_eigh(a: np.ndarray, tol: float = 1e-14,
                   max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as columns).  Each
    eigenvector's largest-magnitude entry is made positive so the basis is
    deterministic.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return np.zeros(n), v

    for _ in range(max_sweeps):
        off_diag = a - np.diag(np.diag(a))
        off = float(np.linalg.norm(off_diag))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * scale / n:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NumericError("Jacobi eigendecomposition did not converge")

    vals = np.diag(a).copy()
    order = np.argsort(-vals)
    vals = vals[order]
    vecs = v[:, order]
    for j in range(n):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


def resample_pulse(samples: np.ndarray, n: int) -> np.ndarray:
    """Linear resampling onto n evenly spaced points over the pulse span."""
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise ValueError("cannot resample fewer than 2 samples")
    src = np.linspace(0.0, 1.0, len(x))
    dst = np.linspace(0.0, 1.0, n)
    return np.interp(dst, src, x)


def acceleration_vector(samples: np.ndarray, n: int) -> np.ndarray:
    """Second difference of the pulse resampled to n points.

    Edge-replicated padding keeps the result at length n so every pulse maps
    into the same space.
    """
    y = resample_pulse(samples, n)
    padded = np.pad(y, 1, mode="edge")
    return padded[2:] - 2.0 * padded[1:-1] + padded[:-2]


@dataclass(frozen=True)
class BaselinePCA:
    """First principal component of baseline second-difference shapes."""

    first_component: np.ndarray
    eigenvalues: np.ndarray
    resample_length: int

    def __post_init__(self):
        psi = np.asarray(self.first_component, dtype=float)
        vals = np.asarray(self.eigenvalues, dtype=float)
        psi.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "first_component", psi)
        object.__setattr__(self, "eigenvalues", vals)


def fit_baseline_pca(pulses: list[Pulse], n: int = DEFAULT_PCA_RESAMPLE) -> BaselinePCA:
    """PCA of the baseline acceleration matrix.

    Each pulse is resampled to n points and second-differenced; the columns
    form an n-by-K matrix B and the decomposition is of (1/K) B Bᵀ.
    """
    if len(pulses) < MIN_BASELINE_PULSES:
        raise InsufficientBaselineError(
            f"baseline PCA needs >= {MIN_BASELINE_PULSES} pulses, got {len(pulses)}"
        )
    b = np.column_stack([acceleration_vector(p.samples, n) for p in pulses])
    cov = (b @ b.T) / b.shape[1]
    vals, vecs = symmetric_eigh(cov)
    vals = np.maximum(vals, 0.0)
    return BaselinePCA(first_component=vecs[:, 0], eigenvalues=vals, resample_length=n)


def subspace_projection(accel: np.ndarray, psi1: np.ndarray) -> float:
    """Squared normalized projection (psi1·b'')² / (b''·b'') in [0, 1]."""
    accel = np.asarray(accel, dtype=float)
    denom = float(accel @ accel)
    if denom <= 0:
        return float("nan")
    num = float(psi1 @ accel) ** 2
    return num / denom


def pca1(pulse: Pulse, baseline: BaselinePCA) -> float:
    accel = acceleration_vector(pulse.samples, baseline.resample_length)
    return subspace_projection(accel, baseline.first_component)


# --------------------------------------------------------------------------
# Per-pulse feature table


def _segment_stats(times: np.ndarray, widths: np.ndarray, anchor: float,
                   segment_length: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Segment-to-date SDNN, RMSSD and NN50 per pulse.

    Statistics restart at every segment boundary; within a segment each pulse
    carries the value computed over the widths seen so far in that segment.
    """
    n = len(times)
    sd = np.full(n, np.nan)
    rm = np.full(n, np.nan)
    cnt = np.zeros(n)
    seg = np.floor((times - anchor) / segment_length).astype(int)
    start = 0
    while start < n:
        stop = start
        while stop < n and seg[stop] == seg[start]:
            stop += 1
        w = widths[start:stop]
        k = np.arange(1, len(w) + 1, dtype=float)
        s1 = np.cumsum(w)
        s2 = np.cumsum(w * w)
        var = np.maximum(s2 / k - (s1 / k) ** 2, 0.0)
        sd_seg = np.sqrt(var)
        sd_seg[0] = np.nan
        d = np.diff(w)
        if len(d):
            dsq = np.concatenate([[np.nan], np.cumsum(d * d) / np.arange(1, len(w))])
            rm_seg = np.sqrt(dsq)
            cnt_seg = np.concatenate([[0], np.cumsum(np.abs(d) > NN50_THRESHOLD_S)])
        else:
            rm_seg = np.array([np.nan])
            cnt_seg = np.array([0.0])
        sd[start:stop] = sd_seg
        rm[start:stop] = rm_seg
        cnt[start:stop] = cnt_seg
        start = stop
    return sd, rm, cnt


def compute_features(
    pulses: list[Pulse],
    rpeaks: RPeakTrain | None = None,
    baseline: BaselinePCA | None = None,
    segment_length: float = DEFAULT_SEGMENT_LENGTH_S,
    spectral_window: float = DEFAULT_SPECTRAL_WINDOW_S,
    anchor: float | None = None,
) -> FeatureTable:
    """Assemble the 12-feature table over the clean pulses.

    PTT is NaN without an R-peak train; PCA1 is NaN without a fitted
    baseline; spectral features are NaN until the trailing window covers
    ``spectral_window`` seconds with at least 30 pulses.
    """
    clean = [p for p in pulses if p.clean]
    if not clean:
        raise DataError("no clean pulses to compute features from")
    times = np.array([p.trough_time for p in clean])
    widths = np.array([p.t_ss for p in clean])
    if anchor is None:
        anchor = float(times[0])

    hr = hr_from_widths(widths)
    sd, rm, cnt = _segment_stats(times, widths, anchor, segment_length)

    lf = np.full(len(clean), np.nan)
    hf = np.full(len(clean), np.nan)
    lfhf = np.full(len(clean), np.nan)
    for i, t in enumerate(times):
        if t - times[0] < spectral_window:
            continue
        lo = int(np.searchsorted(times, t - spectral_window))
        if i + 1 - lo < MIN_SPECTRAL_PULSES:
            continue
        lf[i], hf[i], lfhf[i] = spectral_hrv(times[lo : i + 1], hr[lo : i + 1])

    pa = np.array([pulse_amplitude(p) for p in clean])
    tnct = np.array([normalized_crest_time(p) for p in clean])
    tnmv = np.array([normalized_max_velocity_time(p) for p in clean])
    if rpeaks is not None and len(rpeaks):
        ptt = np.array([pulse_transit_time(p, rpeaks) for p in clean])
    else:
        ptt = np.full(len(clean), np.nan)
    if baseline is not None:
        pc = np.array([pca1(p, baseline) for p in clean])
    else:
        pc = np.full(len(clean), np.nan)

    columns = {
        "HR": hr, "SDNN": sd, "RMSSD": rm, "NN50": cnt,
        "LF": lf, "HF": hf, "LFHF": lfhf,
        "PA": pa, "tNCT": tnct, "PTT": ptt, "tNMV": tnmv, "PCA1": pc,
    }
    return FeatureTable(times=times, columns=columns, pulse_widths=widths)
