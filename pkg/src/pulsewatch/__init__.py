"""PPG/ECG pulse morphology analysis and LSTM-based seizure detection."""

from .core import (
    DataError, NumericError, PulsewatchError, Recording, SampleSeries,
    SeizureAnnotation, ValidationError, baseline_mask, baseline_mask_intervals,
    time_of,
)
from .segmentation import (
    Pulse, RPeakTrain, classify_artifact, detect_rpeaks, detect_troughs,
    segment_pulses,
)
from .sync import ClockFit, ClockModel, StampTrain, apply_clock, detect_stamps, fit_clock
from .features import (
    BaselinePCA, FeatureSeries, FeatureTable, FEATURE_NAMES, HRV_FEATURES,
    HEMODYNAMIC_FEATURES, acceleration_vector, compute_features, fit_baseline_pca,
    hr_from_widths, least_squares_periodogram, nn50, normalized_crest_time,
    normalized_max_velocity_time, pca1, pulse_amplitude, pulse_transit_time,
    rmssd, sdnn, spectral_hrv, subspace_projection, symmetric_eigh,
)
from .stats import (
    ScreenResult, SignificanceReport, ZScoreSeries, aggregate_table, anova_screen,
    one_way_anova, zscore,
)
from .detector import (
    AlarmConfig, EvalMetrics, HoldoutResult, LstmParams, RecordingWindows,
    TrainConfig, TrainResult, WindowedDataset, alarms, evaluate, forward,
    holdout_protocol, init_params, lstm_cell, make_windows, predict, train,
)
from .synth import (
    PhysioScript, PulseShape, ScriptEvent, SynthTruth, generate,
    generate_with_truth, make_corpus,
)
from .pipeline import ProcessedRecording, process_recording, run_pipeline

__version__ = "0.1.0"
