"""Clock alignment between the optical (PPG) device and the EEG/ECG machine.

Both devices see the same train of 10 one-second square pulses at the start
and end of a session; matching the detected rising edges gives a linear clock
model (offset + drift) that re-expresses device time on the EEG clock.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .core import DataError, NumericError, SampleSeries, ValidationError, time_of

EDGE_MERGE_S = 0.5            # rising edges closer than this collapse to the first
MIN_EDGES = 3
MAX_RESIDUAL_S = 0.1          # mean |residual| beyond this means the match is wrong
MAX_PLAUSIBLE_DRIFT = 1e-3    # consumer clocks are well under 1000 ppm


class StampNotFoundError(DataError):
    pass


class AlignmentFailedError(NumericError):
    pass


@dataclass(frozen=True)
class StampTrain:
    edge_times: np.ndarray
    source: str  # "optical" or "analog"

    def __post_init__(self):
        times = np.asarray(self.edge_times, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValidationError("stamp edge times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "edge_times", times)

    def __len__(self) -> int:
        return len(self.edge_times)


@dataclass(frozen=True)
class ClockModel:
    """Device time t maps to EEG time via t' = (t - offset) / (1 + drift)."""

    offset: float
    drift: float

    def __post_init__(self):
        if abs(self.drift) >= MAX_PLAUSIBLE_DRIFT:
            raise ValidationError(f"implausible clock drift {self.drift:.2e} (>= 1e-3)")

    def to_eeg(self, t):
        return (t - self.offset) / (1.0 + self.drift)

    def inverse(self) -> "ClockModel":
        scale = 1.0 + self.drift
        return ClockModel(offset=-self.offset / scale, drift=1.0 / scale - 1.0)


@dataclass(frozen=True)
class ClockFit:
    model: ClockModel
    residual_s: float
    n_matched: int


def detect_stamps(series: SampleSeries, threshold_fraction: float = 0.5,
                  source: str = "optical") -> StampTrain:
    """Rising-edge times where the signal crosses ``threshold_fraction`` of
    its dynamic range within the given window; edges closer than 0.5 s merge.
    """
    if not 0 < threshold_fraction < 1:
        raise ValidationError("threshold_fraction must be in (0, 1)")
    x = series.samples
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise StampNotFoundError(f"flat signal in stamp window of {series.channel_name}")
    threshold = lo + threshold_fraction * (hi - lo)
    above = x >= threshold
    rising = np.flatnonzero(~above[:-1] & above[1:]) + 1

    edges: list[float] = []
    for idx in rising:
        t = time_of(series, int(idx))
        if edges and t - edges[-1] < EDGE_MERGE_S:
            continue
        edges.append(t)
    if len(edges) < MIN_EDGES:
        raise StampNotFoundError(
            f"only {len(edges)} stamp edges found in {series.channel_name} (need >= {MIN_EDGES})"
        )
    return StampTrain(np.array(edges), source=source)


def _match_by_rank(optical: StampTrain, analog: StampTrain) -> tuple[np.ndarray, np.ndarray]:
    k = min(len(optical), len(analog))
    if k < MIN_EDGES:
        raise AlignmentFailedError(f"stamp pair has only {k} matchable edges")
    return optical.edge_times[:k], analog.edge_times[:k]


def fit_clock(start_pair: tuple[StampTrain, StampTrain],
              end_pair: tuple[StampTrain, StampTrain]) -> ClockFit:
    """Least-squares line through rank-matched (analog, optical) edge times
    across both stamp sessions: optical = offset + (1 + drift) * analog.
    """
    y0, x0 = _match_by_rank(*start_pair)
    y1, x1 = _match_by_rank(*end_pair)
    x = np.concatenate([x0, x1])
    y = np.concatenate([y0, y1])

    xm, ym = x.mean(), y.mean()
    dx = x - xm
    denom = float(dx @ dx)
    if denom == 0.0:
        raise AlignmentFailedError("degenerate stamp geometry: all analog edges coincide")
    slope = float(dx @ (y - ym)) / denom
    offset = float(ym - slope * xm)
    residual = float(np.mean(np.abs(y - (offset + slope * x))))
    if residual > MAX_RESIDUAL_S:
        raise AlignmentFailedError(
            f"stamp alignment residual {residual:.3f} s exceeds {MAX_RESIDUAL_S} s"
        )
    return ClockFit(model=ClockModel(offset=offset, drift=slope - 1.0),
                    residual_s=residual, n_matched=len(x))


def apply_clock(series: SampleSeries, model: ClockModel) -> SampleSeries:
    """Re-express a series on the EEG clock.

    Sample values are untouched; the start time is remapped and the sample
    rate picks up the (1 + drift) factor so every sample time transforms
    exactly.
    """
    return SampleSeries(
        channel_name=series.channel_name,
        sample_rate=series.sample_rate * (1.0 + model.drift),
        start_time=model.to_eeg(series.start_time),
        samples=series.samples,
    )
