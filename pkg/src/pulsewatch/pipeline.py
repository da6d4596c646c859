"""End-to-end orchestration: corpus -> segmentation -> features -> z-scores
-> significance screen -> detector -> report bundle.

``run_pipeline`` drives everything from a JSON-style config dict and writes
the artifact bundle (delimited tables, JSON reports, rendered figures) into
an output directory.  All randomness is seeded from the config, and floats
are serialized in round-trip form, so identical configs give byte-identical
CSV/JSON outputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from . import io as pw_io
from .core import DataError, Recording, ValidationError, baseline_mask
from .detector import (
    AlarmConfig, RecordingWindows, TrainConfig, WindowedDataset, alarms, evaluate,
    holdout_protocol, make_windows, predict, train,
)
from .features import (
    DEFAULT_PCA_RESAMPLE, DEFAULT_SEGMENT_LENGTH_S, DEFAULT_SPECTRAL_WINDOW_S,
    FEATURE_NAMES, HRV_FEATURES, FeatureSeries, FeatureTable, compute_features,
    fit_baseline_pca,
)
from .segmentation import detect_rpeaks, detect_troughs, segment_pulses
from .synth import PhysioScript, PulseShape, ScriptEvent, generate, make_corpus
from .stats import ScreenResult, ZScoreSeries, aggregate_table, anova_screen, zscore

log = logging.getLogger(__name__)

HEATMAP_HALF_SPAN_S = 300.0
HEATMAP_BIN_S = 20.0

DEFAULT_CONFIG = {
    "seed": 0,
    "segment_length_s": DEFAULT_SEGMENT_LENGTH_S,
    "pca_resample_n": DEFAULT_PCA_RESAMPLE,
    "spectral_window_s": DEFAULT_SPECTRAL_WINDOW_S,
    "feature_set": 12,
    "detector": {
        "mode": "holdout",          # "holdout", "train" or "none"
        "epochs": 100,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "seed": 0,
        "val_fraction": 0.1,
        "patience": 10,
        "repetitions": 20,
        "span_s": 7200.0,
    },
    "alarm": {"threshold": 0.5, "min_consecutive": 3, "refractory_s": 300.0},
    "figures": True,
    "reject_pulses": {},
}


def merged_config(config: dict | None) -> dict:
    out = json.loads(json.dumps(DEFAULT_CONFIG))
    for key, val in (config or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key].update(val)
        else:
            out[key] = val
    return out


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def feature_set_names(feature_set: int) -> tuple[str, ...]:
    if feature_set == 7:
        return HRV_FEATURES
    if feature_set == 12:
        return FEATURE_NAMES
    raise ValidationError(f"feature_set must be 7 or 12, got {feature_set}")


def script_from_dict(d: dict) -> PhysioScript:
    shape = PulseShape(**d.get("pulse_shape", {}))
    events = tuple(
        ScriptEvent(start=e["start"], end=e["end"],
                    multipliers=e.get("multipliers", {}),
                    label=e.get("label", "seizure"))
        for e in d.get("events", [])
    )
    kwargs = {k: d[k] for k in
              ("duration", "base_hr", "hrv_lf_amp", "hrv_hf_amp",
               "conduction_delay", "noise_sd", "seed") if k in d}
    return PhysioScript(pulse_shape=shape, events=events, **kwargs)


def load_corpus(config: dict) -> list[Recording]:
    corpus = config.get("corpus")
    if not corpus:
        raise ValidationError("config needs a 'corpus' section")
    if "synth" in corpus:
        synth_cfg = dict(corpus["synth"])
        return make_corpus(
            n_recordings=synth_cfg.get("n_recordings", 1),
            seizure_rate=synth_cfg.get("seizure_rate", 0.4),
            seed=synth_cfg.get("seed", 0),
            duration_s=synth_cfg.get("duration_s", 10800.0),
            confounders_per_hour=synth_cfg.get("confounders_per_hour", 1.0),
            noise_fraction=synth_cfg.get("noise_fraction", 0.01),
        )
    if "scripts" in corpus:
        return [generate(script_from_dict(d)) for d in corpus["scripts"]]
    if "recordings" in corpus:
        out = []
        for spec in corpus["recordings"]:
            ppg = pw_io.read_channel_csv(spec["ppg"], "ppg",
                                         sample_rate=spec.get("ppg_rate"))
            ecg = None
            if spec.get("ecg"):
                ecg = pw_io.read_channel_csv(spec["ecg"], "ecg",
                                             sample_rate=spec.get("ecg_rate"))
            annotations = ()
            if spec.get("annotations"):
                annotations = pw_io.read_annotations_json(spec["annotations"])
            out.append(Recording(ppg=ppg, ecg=ecg, annotations=annotations,
                                 subject_id=spec.get("subject_id", Path(spec["ppg"]).stem)))
        return out
    raise ValidationError("corpus must define 'synth', 'scripts' or 'recordings'")


@dataclass
class ProcessedRecording:
    recording: Recording
    pulses: list
    rpeaks: object
    features: FeatureTable
    z_columns: dict[str, np.ndarray]
    clean_mask_baseline: np.ndarray
    pulse_ends: np.ndarray

    def zmatrix(self, names) -> np.ndarray:
        return np.column_stack([self.z_columns[n] for n in names])

    def zseries(self, name: str) -> ZScoreSeries:
        return ZScoreSeries(name, self.features.times, self.z_columns[name])


def zscore_columns(table: FeatureTable, segment_length: float,
                   anchor: float) -> dict[str, np.ndarray]:
    """Previous-segment z-scores for every feature column, kept aligned with
    the table rows (NaN wherever the source value or the z-score is undefined).
    """
    out = {}
    for name in table.columns:
        col = table.columns[name]
        defined = np.flatnonzero(np.isfinite(col))
        zcol = np.full(len(col), np.nan)
        if len(defined):
            series = FeatureSeries(name, table.times[defined], col[defined])
            zs = zscore(series, segment_length=segment_length, anchor=anchor)
            zcol[defined] = zs.zvalues
        out[name] = zcol
    return out


def process_recording(rec: Recording, config: dict) -> ProcessedRecording:
    """Segment one recording and compute aligned features and z-scores."""
    troughs = detect_troughs(rec.ppg)
    pulses = segment_pulses(rec.ppg, troughs)

    rejects = set(config.get("reject_pulses", {}).get(rec.subject_id, []))
    if rejects:
        from dataclasses import replace
        pulses = [replace(p, clean=False) if i in rejects else p
                  for i, p in enumerate(pulses)]

    rpeaks = detect_rpeaks(rec.ecg) if rec.ecg is not None else None
    clean = [p for p in pulses if p.clean]
    if not clean:
        raise DataError(f"{rec.subject_id}: no clean pulses after artifact rejection")
    mask = baseline_mask(clean, rec.annotations)
    baseline_pulses = [p for p, ok in zip(clean, mask) if ok]
    baseline = fit_baseline_pca(baseline_pulses, n=config["pca_resample_n"])

    table = compute_features(
        pulses,
        rpeaks=rpeaks,
        baseline=baseline,
        segment_length=config["segment_length_s"],
        spectral_window=config["spectral_window_s"],
        anchor=rec.ppg.start_time,
    )
    z_cols = zscore_columns(table, config["segment_length_s"], rec.ppg.start_time)
    ends = np.array([p.next_trough_time for p in clean])
    return ProcessedRecording(
        recording=rec, pulses=pulses, rpeaks=rpeaks, features=table,
        z_columns=z_cols, clean_mask_baseline=mask, pulse_ends=ends,
    )


def screen_corpus(processed: list[ProcessedRecording]) -> dict[str, list[ScreenResult]]:
    reports: dict[str, list[ScreenResult]] = {name: [] for name in FEATURE_NAMES}
    for proc in processed:
        for ann in proc.recording.annotations:
            for name in FEATURE_NAMES:
                reports[name].append(
                    anova_screen(proc.zseries(name), ann, proc.clean_mask_baseline)
                )
    return reports


def heatmap_matrix(processed: list[ProcessedRecording], feature: str,
                   half_span: float = HEATMAP_HALF_SPAN_S,
                   bin_s: float = HEATMAP_BIN_S) -> tuple[np.ndarray, list[str]]:
    """Seizure-by-time-bin mean z-scores around each onset."""
    edges = np.arange(-half_span, half_span + bin_s / 2, bin_s)
    rows = []
    labels = []
    for proc in processed:
        z = proc.z_columns[feature]
        t = proc.features.times
        for k, ann in enumerate(proc.recording.annotations):
            rel = t - ann.onset
            row = np.full(len(edges) - 1, np.nan)
            for j in range(len(edges) - 1):
                sel = (rel >= edges[j]) & (rel < edges[j + 1]) & np.isfinite(z)
                if sel.any():
                    row[j] = float(z[sel].mean())
            rows.append(row)
            labels.append(f"{proc.recording.subject_id}/sz{k}")
    matrix = np.vstack(rows) if rows else np.empty((0, len(edges) - 1))
    return matrix, labels


def detector_windows(processed: list[ProcessedRecording],
                     names) -> list[RecordingWindows]:
    runs = []
    for proc in processed:
        ds = make_windows(proc.features.times, proc.zmatrix(names),
                          proc.recording.annotations, names)
        runs.append(RecordingWindows(
            dataset=ds,
            annotations=proc.recording.annotations,
            t_start=proc.recording.ppg.start_time,
            t_end=proc.recording.ppg.end_time,
        ))
    return runs


def _train_mode_metrics(runs: list[RecordingWindows], train_cfg: TrainConfig,
                        alarm_cfg: AlarmConfig) -> dict:
    """Train on all windows and score alarms over the full corpus (used when
    the corpus is too small for the holdout protocol)."""
    from .detector import _concat_datasets
    dataset = _concat_datasets([r.dataset for r in runs])
    result = train(dataset, train_cfg)
    all_alarms = []
    annotations = []
    total_h = 0.0
    for run in runs:
        probs = predict(run.dataset, result.params)
        all_alarms.extend(alarms(probs, run.dataset.window_times,
                                 threshold=alarm_cfg.threshold,
                                 min_consecutive=alarm_cfg.min_consecutive,
                                 refractory_s=alarm_cfg.refractory_s))
        annotations.extend(run.annotations)
        total_h += run.duration / 3600.0
    metrics = evaluate(sorted(all_alarms), annotations, total_h)
    return {"mode": "train", "metrics": metrics.as_dict(),
            "train_losses": result.train_losses, "params": result.params}


def run_pipeline(config: dict | None, out_dir) -> dict:
    """Execute every configured stage and write the artifact bundle.

    Returns the manifest (also written as run_manifest.json).  Raises the
    stage's error type on failure; partial outputs stay on disk and the
    manifest is not written.
    """
    config = merged_config(config)
    chash = config_hash(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stages: list[str] = []

    def stage(name):
        stages.append(name)
        log.info("stage: %s", name)

    stage("ingest")
    recordings = load_corpus(config)

    stage("segment+features+zscore")
    processed = []
    for rec in recordings:
        processed.append(process_recording(rec, config))
    rec_dirs = {}
    for proc in processed:
        rdir = out_dir / f"rec_{proc.recording.subject_id}"
        rdir.mkdir(exist_ok=True)
        pw_io.write_feature_csv(proc.features, rdir / "features.csv")
        pw_io.write_zscore_csv(proc.features.times, proc.pulse_ends,
                               proc.z_columns, rdir / "zscores.csv")
        rec_dirs[proc.recording.subject_id] = str(rdir)

    stage("screen")
    reports = screen_corpus(processed)
    table3 = aggregate_table(reports).as_dict()
    pw_io.write_json({"config_hash": chash, "features": table3},
                     out_dir / "table3.json")

    stage("heatmaps")
    heatmaps = {}
    n_bins = int(2 * HEATMAP_HALF_SPAN_S / HEATMAP_BIN_S)
    bin_headers = [f"t{int(-HEATMAP_HALF_SPAN_S + j * HEATMAP_BIN_S)}s"
                   for j in range(n_bins)]
    for name in FEATURE_NAMES:
        matrix, labels = heatmap_matrix(processed, name)
        path = out_dir / f"heatmap_{name}.csv"
        pw_io.write_matrix_csv(matrix, path, header=["seizure", *bin_headers],
                               row_labels=labels)
        heatmaps[name] = (matrix, labels)

    detector_cfg = config["detector"]
    metrics_payload: dict = {"config_hash": chash, "mode": detector_cfg["mode"]}
    train_losses = None
    if detector_cfg["mode"] != "none":
        stage("detector")
        names = feature_set_names(config["feature_set"])
        runs = detector_windows(processed, names)
        train_cfg = TrainConfig(
            epochs=detector_cfg["epochs"], batch_size=detector_cfg["batch_size"],
            learning_rate=detector_cfg["learning_rate"], seed=detector_cfg["seed"],
            val_fraction=detector_cfg["val_fraction"], patience=detector_cfg["patience"],
        )
        alarm_cfg = AlarmConfig(**config["alarm"])
        if detector_cfg["mode"] == "holdout":
            result = holdout_protocol(
                runs, repetitions=detector_cfg["repetitions"],
                span_s=detector_cfg["span_s"], train_config=train_cfg,
                alarm_config=alarm_cfg, seed=detector_cfg["seed"])
            metrics_payload.update(result.as_dict())
            metrics_payload["feature_set"] = config["feature_set"]
        elif detector_cfg["mode"] == "train":
            info = _train_mode_metrics(runs, train_cfg, alarm_cfg)
            train_losses = info["train_losses"]
            pw_io.write_model_json(info["params"], out_dir / "model.json",
                                   extra={"config_hash": chash})
            metrics_payload.update(info["metrics"])
            metrics_payload["feature_set"] = config["feature_set"]
        else:
            raise ValidationError(f"unknown detector mode {detector_cfg['mode']!r}")
    pw_io.write_json(metrics_payload, out_dir / "metrics.json")

    if config.get("figures", True):
        stage("figures")
        from . import report
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        report.render_heatmap_grid(heatmaps, fig_dir / "zscore_heatmaps.png")
        report.render_segmentation(processed[0], fig_dir / "segmentation.png")
        if train_losses:
            report.render_loss_curve(train_losses, fig_dir / "detector_loss.png")

    manifest = {
        "config": config,
        "config_hash": chash,
        "recordings": rec_dirs,
        "stages": stages,
        "artifacts": sorted(str(p.relative_to(out_dir))
                            for p in out_dir.rglob("*")
                            if p.is_file() and p.name != "run_manifest.json"),
    }
    pw_io.write_json(manifest, out_dir / "run_manifest.json")
    return manifest
