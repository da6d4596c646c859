"""Shared domain types: sampled channels, annotations, recordings, baseline masks.

All containers are immutable after construction so recordings can be fanned
out to parallel workers without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

# Exclusion margins around a seizure when deciding what counts as interictal
# baseline: a pulse must end >15 min before onset or begin >5 min after offset.
BASELINE_PRE_ONSET_S = 15 * 60.0
BASELINE_POST_OFFSET_S = 5 * 60.0


class PulsewatchError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(PulsewatchError):
    """Bad configuration or malformed inputs (CLI exit code 2)."""


class DataError(PulsewatchError):
    """Inputs parse but do not contain what a stage needs (CLI exit code 3)."""


class NumericError(PulsewatchError):
    """A numeric procedure failed to converge or produced garbage (CLI exit code 4)."""


@dataclass(frozen=True)
class SampleSeries:
    """Uniformly sampled channel on the session clock.

    Sample i sits at ``start_time + i / sample_rate`` seconds.
    """

    channel_name: str
    sample_rate: float
    start_time: float
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.sample_rate

    def index_at(self, t: float) -> int:
        """Nearest sample index for time t (clamped to the valid range)."""
        i = int(round((t - self.start_time) * self.sample_rate))
        return min(max(i, 0), len(self.samples) - 1)


def time_of(series: SampleSeries, index: int) -> float:
    """Time of sample ``index``: start_time + index / sample_rate."""
    if not 0 <= index < len(series.samples):
        raise IndexError(f"sample index {index} out of range [0, {len(series.samples)})")
    return series.start_time + index / series.sample_rate


@dataclass(frozen=True)
class SeizureAnnotation:
    onset: float
    offset: float
    label: str = "seizure"

    def __post_init__(self):
        if not self.offset > self.onset:
            raise ValidationError(
                f"annotation offset ({self.offset}) must exceed onset ({self.onset})"
            )


def _check_sorted_disjoint(annotations: tuple[SeizureAnnotation, ...]):
    for a, b in zip(annotations, annotations[1:]):
        if b.onset < a.offset:
            raise ValidationError(
                f"annotations overlap or are unsorted: [{a.onset},{a.offset}] vs [{b.onset},{b.offset}]"
            )


@dataclass(frozen=True)
class Recording:
    """One subject session: PPG channel, optional ECG, and seizure marks."""

    ppg: SampleSeries
    ecg: SampleSeries | None = None
    annotations: tuple[SeizureAnnotation, ...] = field(default_factory=tuple)
    subject_id: str = "unknown"

    def __post_init__(self):
        annotations = tuple(sorted(self.annotations, key=lambda a: a.onset))
        _check_sorted_disjoint(annotations)
        object.__setattr__(self, "annotations", annotations)
        t0, t1 = self.time_span()
        for a in annotations:
            if a.onset < t0 or a.offset > t1:
                raise ValidationError(
                    f"annotation [{a.onset},{a.offset}] outside recorded span [{t0},{t1}]"
                )

    def time_span(self) -> tuple[float, float]:
        """Union of channel spans (ECG may start earlier / end later than PPG)."""
        t0, t1 = self.ppg.start_time, self.ppg.end_time
        if self.ecg is not None:
            t0 = min(t0, self.ecg.start_time)
            t1 = max(t1, self.ecg.end_time)
        return t0, t1


def baseline_mask_intervals(starts, ends, annotations) -> np.ndarray:
    """Baseline mask over arbitrary [start, end] intervals.

    An interval qualifies against one seizure when it ends more than 15 min
    before the onset or begins more than 5 min after the offset; it must
    qualify against every seizure (intersection of the allowed regions).
    With no annotations everything is baseline.
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    mask = np.ones(len(starts), dtype=bool)
    for a in annotations:
        mask &= (ends < a.onset - BASELINE_PRE_ONSET_S) | (
            starts > a.offset + BASELINE_POST_OFFSET_S
        )
    return mask


def baseline_mask(pulses, annotations) -> np.ndarray:
    """Boolean mask over pulses: True where a pulse is interictal baseline."""
    starts = [p.trough_time for p in pulses]
    ends = [p.next_trough_time for p in pulses]
    return baseline_mask_intervals(starts, ends, annotations)
