"""Synthetic PPG/ECG corpora with programmable ictal signatures.

Each beat is a two-lobe template: a monotone cubic systolic upstroke peaking
at ``crest_fraction`` of the beat width, a cosine diastolic decline, and one
Gaussian dicrotic bump.  Beat widths follow an instantaneous heart rate with
sinusoidal LF (0.1 Hz) and HF (0.3 Hz) modulation; the ECG is an
impulse-like R-wave train leading each PPG trough by the conduction delay.

Events multiply chosen parameters with smooth 5 s ramps.  Labeled events
become seizure annotations; unlabeled ones act as benign heart-rate
perturbations, which is what separates an HRV-only detector from the full
hemodynamic one: both see the same heart-rate swing, but only a seizure
changes the pulse shape and transit time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .core import Recording, SampleSeries, SeizureAnnotation, ValidationError

PPG_RATE_HZ = 64.0
ECG_RATE_HZ = 500.0
LF_MOD_HZ = 0.1
HF_MOD_HZ = 0.3
EVENT_RAMP_S = 5.0
UPSTROKE_START_SLOPE = 0.6   # beta of the cubic upstroke; sets trough sharpness
DECLINE_EXPONENT = 3         # diastolic decline 1 - u^p; sets trough entry slope
NOTCH_POSITION_FRAC = 0.72   # dicrotic bump position within the catacrotic phase
NOTCH_WIDTH_FRAC = 0.045
NOTCH_VALLEY_LEAD = 2.4      # dip center, in bump widths before the bump
NOTCH_VALLEY_DEPTH = 0.5     # dip depth relative to the bump height
NOTCH_DEPTH_CAP = 0.25       # keeps the bump well below the systolic peak
R_SPIKE_SIGMA_S = 0.008
MIN_BEAT_WIDTH_S = 0.30
MAX_BEAT_WIDTH_S = 1.9

MULTIPLIER_KEYS = (
    "hr", "amplitude", "crest_fraction", "notch_depth",
    "conduction_delay", "hrv_lf_amp", "hrv_hf_amp",
)


@dataclass(frozen=True)
class PulseShape:
    crest_fraction: float = 0.30
    notch_depth: float = 0.22
    amplitude: float = 1.0


@dataclass(frozen=True)
class ScriptEvent:
    """A time interval that multiplies generator parameters.

    ``label`` None means the event is not annotated (a benign perturbation);
    any string labels it as a seizure.
    """

    start: float
    end: float
    multipliers: dict
    label: str | None = "seizure"


@dataclass(frozen=True)
class PhysioScript:
    duration: float
    base_hr: float = 1.1
    hrv_lf_amp: float = 0.025
    hrv_hf_amp: float = 0.035
    pulse_shape: PulseShape = field(default_factory=PulseShape)
    conduction_delay: float = 0.25
    events: tuple[ScriptEvent, ...] = ()
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.duration <= 0 or self.base_hr <= 0:
            raise ValidationError("duration and base_hr must be positive")
        if not 0.05 < self.pulse_shape.crest_fraction < 0.6:
            raise ValidationError("crest_fraction must lie in (0.05, 0.6)")
        if self.pulse_shape.amplitude <= 0:
            raise ValidationError("pulse amplitude must be positive")
        for ev in self.events:
            if not (0 <= ev.start < ev.end <= self.duration):
                raise ValidationError(
                    f"event [{ev.start},{ev.end}] outside recording [0,{self.duration}]"
                )
            for key, mult in ev.multipliers.items():
                if key not in MULTIPLIER_KEYS:
                    raise ValidationError(f"unknown event multiplier {key!r}")
                if mult <= 0:
                    raise ValidationError(f"multiplier {key}={mult} must be positive")


@dataclass(frozen=True)
class SynthTruth:
    """Ground truth emitted alongside a generated recording."""

    trough_times: np.ndarray
    rpeak_times: np.ndarray
    beat_widths: np.ndarray
    beat_crests: np.ndarray
    beat_amplitudes: np.ndarray


def _ramp(t: float, start: float, end: float) -> float:
    """Smooth 0->1->0 envelope: cosine ramps of EVENT_RAMP_S at both edges."""
    if t < start or t > end + EVENT_RAMP_S:
        return 0.0
    if t < start + EVENT_RAMP_S:
        return 0.5 * (1.0 - np.cos(np.pi * (t - start) / EVENT_RAMP_S))
    if t <= end:
        return 1.0
    return 0.5 * (1.0 + np.cos(np.pi * (t - end) / EVENT_RAMP_S))


def _factor(events, key: str, t: float) -> float:
    out = 1.0
    for ev in events:
        mult = ev.multipliers.get(key)
        if mult is not None:
            out *= 1.0 + (mult - 1.0) * _ramp(t, ev.start, ev.end)
    return out


def _upstroke(u: np.ndarray) -> np.ndarray:
    """Monotone cubic from 0 to 1 with nonzero start slope and a flat crest.

    The derivative is proportional to (1-u)(u+beta), so the steepest point
    sits strictly inside the rise at (1-beta)/2.
    """
    beta = UPSTROKE_START_SLOPE
    norm = beta / 2.0 + 1.0 / 6.0
    return (beta * u + (1.0 - beta) * u * u / 2.0 - u**3 / 3.0) / norm


def beat_template(phi: np.ndarray, crest: float, notch_depth: float) -> np.ndarray:
    """Unit-amplitude beat on the normalized phase grid phi in [0, 1).

    Parabolic diastolic decline so the wave enters the next trough with a
    slope comparable to the upstroke's start: the trough is a sharp V that
    localizes to one sample even under noise.
    """
    phi = np.asarray(phi, dtype=float)
    out = np.empty_like(phi)
    rising = phi < crest
    out[rising] = _upstroke(phi[rising] / crest)
    u2 = (phi[~rising] - crest) / (1.0 - crest)
    out[~rising] = 1.0 - u2**DECLINE_EXPONENT
    # Dicrotic wave: a dip followed by a secondary bump, as after aortic
    # valve closure.  The dip makes the notch prominent enough to survive the
    # segmenter's anti-jitter smoothing.
    nu = crest + NOTCH_POSITION_FRAC * (1.0 - crest)
    depth = min(notch_depth, NOTCH_DEPTH_CAP)
    out += depth * np.exp(-0.5 * ((phi - nu) / NOTCH_WIDTH_FRAC) ** 2)
    valley_center = nu - NOTCH_VALLEY_LEAD * NOTCH_WIDTH_FRAC
    out -= depth * NOTCH_VALLEY_DEPTH * np.exp(
        -0.5 * ((phi - valley_center) / (1.2 * NOTCH_WIDTH_FRAC)) ** 2
    )
    return out


def generate_with_truth(script: PhysioScript) -> tuple[Recording, SynthTruth]:
    """Render a scripted recording and return its beat-level ground truth."""
    rng = np.random.default_rng(script.seed)
    lf_phase, hf_phase = rng.uniform(0.0, 2.0 * np.pi, size=2)

    beats = []  # (t0, width, crest, depth, amplitude, delay)
    t = 0.0
    while True:
        lf = script.hrv_lf_amp * _factor(script.events, "hrv_lf_amp", t)
        hf = script.hrv_hf_amp * _factor(script.events, "hrv_hf_amp", t)
        hr = script.base_hr * _factor(script.events, "hr", t) * (
            1.0
            + lf * np.sin(2.0 * np.pi * LF_MOD_HZ * t + lf_phase)
            + hf * np.sin(2.0 * np.pi * HF_MOD_HZ * t + hf_phase)
        )
        width = min(max(1.0 / hr, MIN_BEAT_WIDTH_S), MAX_BEAT_WIDTH_S)
        # Snap each beat to the PPG grid so every trough falls exactly on a
        # sample (1/64 s is dyadic, so the running clock stays exact).
        width = round(width * PPG_RATE_HZ) / PPG_RATE_HZ
        if t + width > script.duration:
            break
        crest = script.pulse_shape.crest_fraction * _factor(script.events, "crest_fraction", t)
        crest = min(max(crest, 0.06), 0.59)
        depth = script.pulse_shape.notch_depth * _factor(script.events, "notch_depth", t)
        amp = script.pulse_shape.amplitude * _factor(script.events, "amplitude", t)
        delay = script.conduction_delay * _factor(script.events, "conduction_delay", t)
        beats.append((t, width, crest, depth, amp, delay))
        t += width

    if not beats:
        raise ValidationError("script too short to contain a single beat")
    trough_times = np.array([b[0] for b in beats] + [t])

    n_ppg = int(round(script.duration * PPG_RATE_HZ))
    ppg = np.zeros(n_ppg)
    for t0, width, crest, depth, amp, _delay in beats:
        i0 = int(round(t0 * PPG_RATE_HZ))
        i1 = min(n_ppg, int(round((t0 + width) * PPG_RATE_HZ)))
        if i1 - i0 < 2:
            continue
        phi = (np.arange(i0, i1) / PPG_RATE_HZ - t0) / width
        ppg[i0:i1] = amp * beat_template(phi, crest, depth)

    # A phantom partial beat past the last trough keeps the tail
    # physiological instead of leaving a noise-only flat stretch; it is not
    # part of the ground truth and gets no endpoint pinning.
    _, width, crest, depth, amp, _delay = beats[-1]
    i0 = int(np.ceil(t * PPG_RATE_HZ - 1e-9))
    if n_ppg - i0 >= 2:
        phi = (np.arange(i0, n_ppg) / PPG_RATE_HZ - t) / width
        ppg[i0:n_ppg] = amp * beat_template(phi, crest, depth)

    rpeak_times = np.array([b[0] - b[5] for b in beats])
    rpeak_times = rpeak_times[rpeak_times >= 3.0 * R_SPIKE_SIGMA_S]

    n_ecg = int(round(script.duration * ECG_RATE_HZ))
    ecg = np.zeros(n_ecg)
    half = int(np.ceil(3.0 * R_SPIKE_SIGMA_S * ECG_RATE_HZ))
    for r in rpeak_times:
        center = r * ECG_RATE_HZ
        i0 = max(0, int(np.floor(center)) - half)
        i1 = min(n_ecg, int(np.ceil(center)) + half + 1)
        tt = np.arange(i0, i1) / ECG_RATE_HZ
        ecg[i0:i1] += np.exp(-0.5 * ((tt - r) / R_SPIKE_SIGMA_S) ** 2)

    if script.noise_sd > 0:
        ppg = ppg + rng.normal(0.0, script.noise_sd, size=n_ppg)
        ecg_sd = script.noise_sd / script.pulse_shape.amplitude
        ecg = ecg + rng.normal(0.0, ecg_sd, size=n_ecg)

    annotations = tuple(
        SeizureAnnotation(ev.start, ev.end, ev.label)
        for ev in script.events if ev.label is not None
    )
    rec = Recording(
        ppg=SampleSeries("ppg", PPG_RATE_HZ, 0.0, ppg),
        ecg=SampleSeries("ecg", ECG_RATE_HZ, 0.0, ecg),
        annotations=annotations,
        subject_id=f"synth-{script.seed}",
    )
    truth = SynthTruth(
        trough_times=trough_times,
        rpeak_times=rpeak_times,
        beat_widths=np.array([b[1] for b in beats]),
        beat_crests=np.array([b[2] for b in beats]),
        beat_amplitudes=np.array([b[4] for b in beats]),
    )
    return rec, truth


def generate(script: PhysioScript) -> Recording:
    return generate_with_truth(script)[0]


# --------------------------------------------------------------------------
# Corpus construction

ICTAL_HR_MULT = (1.30, 1.50)
ICTAL_HF_MULT = (2.00, 2.80)
ICTAL_LF_MULT = (1.20, 1.60)
ICTAL_AMPLITUDE_MULT = (0.50, 0.70)
ICTAL_CREST_MULT = (1.35, 1.50)
ICTAL_NOTCH_MULT = (1.30, 1.50)
ICTAL_DELAY_MULT = (0.55, 0.70)
ICTAL_DURATION_S = (90.0, 180.0)
EVENT_EDGE_MARGIN_S = 1500.0
EVENT_MIN_GAP_S = 1500.0


def _place_intervals(rng, n: int, duration: float, existing: list[tuple[float, float]],
                     length_range: tuple[float, float],
                     margin: float, gap: float) -> list[tuple[float, float]]:
    placed = []
    taken = list(existing)
    for _ in range(n):
        for _attempt in range(200):
            length = rng.uniform(*length_range)
            start = rng.uniform(margin, duration - margin - length)
            end = start + length
            if all(end + gap < a or start - gap > b for a, b in taken):
                placed.append((start, end))
                taken.append((start, end))
                break
    return placed


def _ictal_event(rng, start: float, end: float) -> ScriptEvent:
    return ScriptEvent(start=start, end=end, label="seizure", multipliers={
        "hr": rng.uniform(*ICTAL_HR_MULT),
        "hrv_hf_amp": rng.uniform(*ICTAL_HF_MULT),
        "hrv_lf_amp": rng.uniform(*ICTAL_LF_MULT),
        "amplitude": rng.uniform(*ICTAL_AMPLITUDE_MULT),
        "crest_fraction": rng.uniform(*ICTAL_CREST_MULT),
        "notch_depth": rng.uniform(*ICTAL_NOTCH_MULT),
        "conduction_delay": rng.uniform(*ICTAL_DELAY_MULT),
    })


def _benign_event(rng, start: float, end: float) -> ScriptEvent:
    """Heart-rate perturbation with the ictal HRV signature but untouched
    hemodynamics, and no annotation."""
    return ScriptEvent(start=start, end=end, label=None, multipliers={
        "hr": rng.uniform(*ICTAL_HR_MULT),
        "hrv_hf_amp": rng.uniform(*ICTAL_HF_MULT),
        "hrv_lf_amp": rng.uniform(*ICTAL_LF_MULT),
    })


def corpus_scripts(n_recordings: int, seizure_rate: float, seed: int,
                   duration_s: float = 10800.0,
                   confounders_per_hour: float = 1.0,
                   noise_fraction: float = 0.01) -> list[PhysioScript]:
    """Randomized per-recording scripts for make_corpus.

    ``seizure_rate`` is seizures per hour over the whole corpus; the total
    count is spread round-robin over recordings.  Benign heart-rate events
    (unannotated) are sprinkled at ``confounders_per_hour``.
    """
    if n_recordings < 1:
        raise ValidationError("need at least one recording")
    rng = np.random.default_rng(seed)
    total_hours = n_recordings * duration_s / 3600.0
    n_events = int(round(seizure_rate * total_hours))
    counts = [0] * n_recordings
    order = list(rng.permutation(n_recordings))
    for k in range(n_events):
        if k % n_recordings == 0 and k > 0:
            order = list(rng.permutation(n_recordings))
        counts[order[k % n_recordings]] += 1

    scripts = []
    for i in range(n_recordings):
        amplitude = rng.uniform(0.8, 1.2)
        shape = PulseShape(
            crest_fraction=rng.uniform(0.28, 0.34),
            notch_depth=rng.uniform(0.19, 0.23),
            amplitude=amplitude,
        )
        ictal_spans = _place_intervals(
            rng, counts[i], duration_s, [], ICTAL_DURATION_S,
            EVENT_EDGE_MARGIN_S, EVENT_MIN_GAP_S)
        events = [_ictal_event(rng, a, b) for a, b in ictal_spans]
        n_benign = rng.poisson(confounders_per_hour * duration_s / 3600.0)
        benign_spans = _place_intervals(
            rng, int(n_benign), duration_s, ictal_spans, ICTAL_DURATION_S,
            600.0, 600.0)
        events += [_benign_event(rng, a, b) for a, b in benign_spans]
        events.sort(key=lambda e: e.start)
        scripts.append(PhysioScript(
            duration=duration_s,
            base_hr=rng.uniform(0.95, 1.25),
            hrv_lf_amp=rng.uniform(0.02, 0.03),
            hrv_hf_amp=rng.uniform(0.03, 0.04),
            pulse_shape=shape,
            conduction_delay=rng.uniform(0.20, 0.30),
            events=tuple(events),
            noise_sd=noise_fraction * amplitude,
            seed=int(rng.integers(2**31)),
        ))
    return scripts


def make_corpus(n_recordings: int, seizure_rate: float, seed: int,
                duration_s: float = 10800.0,
                confounders_per_hour: float = 1.0,
                noise_fraction: float = 0.01) -> list[Recording]:
    """Generate a labeled corpus; deterministic for a fixed seed."""
    scripts = corpus_scripts(n_recordings, seizure_rate, seed, duration_s,
                             confounders_per_hour, noise_fraction)
    out = []
    for i, script in enumerate(scripts):
        rec, _ = generate_with_truth(script)
        out.append(Recording(ppg=rec.ppg, ecg=rec.ecg,
                             annotations=rec.annotations, subject_id=f"synth-{i:02d}"))
    return out
