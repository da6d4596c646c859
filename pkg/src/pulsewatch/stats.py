"""Previous-segment z-scores and ANOVA significance screening.

Feature streams are cut into non-overlapping 5-minute segments; each value
is standardized by the mean and population standard deviation of the
previous segment.  A one-way two-group ANOVA then compares interictal
baseline z-values against the 5 minutes following each seizure onset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
import numpy as np
from scipy import stats

from .core import SeizureAnnotation
from .features import FeatureSeries

log = logging.getLogger(__name__)

DEFAULT_SEGMENT_LENGTH_S = 300.0
SIGMA_FLOOR = 1e-12
POST_ONSET_WINDOW_S = 300.0
SIGNIFICANCE_P = 0.01
MIN_GROUP_SIZE = 10


@dataclass(frozen=True)
class ZScoreSeries:
    feature_name: str
    times: np.ndarray
    zvalues: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        z = np.asarray(self.zvalues, dtype=float)
        times.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "zvalues", z)

    def __len__(self) -> int:
        return len(self.times)


def zscore(feature: FeatureSeries, segment_length: float = DEFAULT_SEGMENT_LENGTH_S,
           anchor: float | None = None) -> ZScoreSeries:
    """Standardize each value by its previous segment's mean and sigma.

    Values in the first segment, or in a segment whose predecessor is empty
    or degenerate (sigma below 1e-12), come out NaN.  Segments are anchored
    at ``anchor`` (recording start; defaults to the first sample's time).
    """
    t = feature.times
    x = feature.values
    if anchor is None:
        anchor = float(t[0]) if len(t) else 0.0
    seg = np.floor((t - anchor) / segment_length).astype(int)
    z = np.full(len(x), np.nan)

    by_segment: dict[int, np.ndarray] = {}
    for k in np.unique(seg):
        vals = x[seg == k]
        by_segment[k] = vals[np.isfinite(vals)]

    for k in np.unique(seg):
        prev = by_segment.get(k - 1)
        if prev is None or len(prev) == 0:
            log.debug("%s: segment %d has no predecessor data, z undefined",
                      feature.feature_name, k)
            continue
        mu = float(prev.mean())
        sigma = float(np.sqrt(np.mean((prev - mu) ** 2)))
        if sigma < SIGMA_FLOOR:
            log.debug("%s: segment %d predecessor is degenerate (sigma=%g)",
                      feature.feature_name, k, sigma)
            continue
        sel = seg == k
        z[sel] = (x[sel] - mu) / sigma
    return ZScoreSeries(feature.feature_name, t, z)


@dataclass(frozen=True)
class ScreenResult:
    """Outcome of one feature x seizure significance test."""

    p_value: float | None
    direction: str  # "increase", "decrease" or "none"
    baseline_n: int = 0
    post_n: int = 0

    @property
    def significant(self) -> bool:
        return self.p_value is not None and self.p_value < SIGNIFICANCE_P


def one_way_anova(group_a: np.ndarray, group_b: np.ndarray) -> tuple[float, float]:
    """Two-group one-way ANOVA: returns (F, p).

    F is between-group mean square over within-group mean square with
    (1, n-2) degrees of freedom.  Identical constant groups give F=0, p=1.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    n1, n2 = len(a), len(b)
    grand = np.concatenate([a, b]).mean()
    ss_between = n1 * (a.mean() - grand) ** 2 + n2 * (b.mean() - grand) ** 2
    ss_within = float(np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2))
    dof = n1 + n2 - 2
    if ss_within <= 0:
        if ss_between <= 0:
            return 0.0, 1.0
        return float("inf"), 0.0
    f = (ss_between / 1.0) / (ss_within / dof)
    p = float(stats.f.sf(f, 1, dof))
    return float(f), p


def anova_screen(z: ZScoreSeries, annotation: SeizureAnnotation,
                 mask: np.ndarray) -> ScreenResult:
    """Compare interictal baseline z-values against the post-onset window.

    ``mask`` is the per-pulse baseline mask aligned with ``z``.  Needs at
    least 10 finite values in each group, otherwise the result is undefined.
    Direction is the sign of the post-minus-baseline mean, reported only when
    p < 0.01.
    """
    finite = np.isfinite(z.zvalues)
    base = z.zvalues[finite & np.asarray(mask, dtype=bool)]
    in_post = (z.times >= annotation.onset) & (
        z.times <= annotation.onset + POST_ONSET_WINDOW_S
    )
    post = z.zvalues[finite & in_post]
    if len(base) < MIN_GROUP_SIZE or len(post) < MIN_GROUP_SIZE:
        return ScreenResult(p_value=None, direction="none",
                            baseline_n=len(base), post_n=len(post))
    _, p = one_way_anova(base, post)
    direction = "none"
    if p < SIGNIFICANCE_P:
        direction = "increase" if post.mean() > base.mean() else "decrease"
    return ScreenResult(p_value=p, direction=direction,
                        baseline_n=len(base), post_n=len(post))


@dataclass
class SignificanceReport:
    """Per-feature aggregate of significance screens over all seizures."""

    per_feature: dict[str, dict] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return self.per_feature


def aggregate_table(reports: dict[str, list[ScreenResult]]) -> SignificanceReport:
    """Percentages of seizures with significant change / increase / decrease.

    Denominators count seizures where the screen was defined for that
    feature; seizures with too little data do not enter the percentages.
    """
    out = SignificanceReport()
    for name, results in reports.items():
        defined = [r for r in results if r.p_value is not None]
        n = len(defined)
        sig = sum(r.significant for r in defined)
        inc = sum(r.significant and r.direction == "increase" for r in defined)
        dec = sum(r.significant and r.direction == "decrease" for r in defined)
        out.per_feature[name] = {
            "n_seizures": len(results),
            "n_tested": n,
            "pct_significant": 100.0 * sig / n if n else 0.0,
            "pct_increase": 100.0 * inc / n if n else 0.0,
            "pct_decrease": 100.0 * dec / n if n else 0.0,
            "per_seizure": [
                {"p_value": r.p_value, "direction": r.direction} for r in results
            ],
        }
    return out
