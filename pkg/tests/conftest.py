import numpy as np
import pytest

from pulsewatch import synth
from pulsewatch.segmentation import detect_rpeaks, detect_troughs, segment_pulses


@pytest.fixture(scope="session")
def clean_recording():
    """Two minutes of gently modulated signal at 1% noise, with truth."""
    script = synth.PhysioScript(
        duration=120.0, base_hr=1.05, hrv_lf_amp=0.02, hrv_hf_amp=0.035,
        noise_sd=0.01, seed=101,
    )
    return synth.generate_with_truth(script)


@pytest.fixture(scope="session")
def segmented(clean_recording):
    rec, truth = clean_recording
    troughs = detect_troughs(rec.ppg)
    pulses = segment_pulses(rec.ppg, troughs)
    rpeaks = detect_rpeaks(rec.ecg)
    return rec, truth, pulses, rpeaks


@pytest.fixture(scope="session")
def noiseless_pulses():
    script = synth.PhysioScript(
        duration=60.0, base_hr=1.0, hrv_lf_amp=0.0, hrv_hf_amp=0.0,
        noise_sd=0.0, seed=5,
    )
    rec, truth = synth.generate_with_truth(script)
    pulses = segment_pulses(rec.ppg, detect_troughs(rec.ppg))
    return rec, truth, pulses
