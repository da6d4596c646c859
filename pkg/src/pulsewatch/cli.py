"""Command-line entry points.

Subcommands: synth, sync, segment, features, zscore, screen, train, eval,
run.  Exit codes: 0 success, 2 validation error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
import numpy as np

from . import io as pw_io
from .core import (
    DataError, NumericError, PulsewatchError, ValidationError,
    baseline_mask_intervals,
)
from .detector import (
    AlarmConfig, TrainConfig, WindowedDataset, _concat_datasets, alarms, evaluate,
    make_windows, predict, train,
)
from .features import compute_features, fit_baseline_pca
from .pipeline import (
    feature_set_names, load_corpus, merged_config, run_pipeline, script_from_dict,
)
from .segmentation import detect_rpeaks, detect_troughs, segment_pulses
from .sync import apply_clock, detect_stamps, fit_clock
from .stats import ZScoreSeries, aggregate_table, anova_screen, zscore
from .features import FeatureSeries

log = logging.getLogger("pulsewatch")

EXIT_CODES = {ValidationError: 2, DataError: 3, NumericError: 4}


def _window_arg(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"expected 'start,end', got {text!r}") from exc
    if b <= a:
        raise ValidationError(f"window end must exceed start: {text!r}")
    return a, b


def cmd_synth(args) -> None:
    with open(args.script) as fh:
        spec = json.load(fh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if "corpus" in spec:
        cfg = merged_config({"corpus": spec["corpus"]})
        recordings = load_corpus(cfg)
    else:
        from .synth import generate
        recordings = [generate(script_from_dict(spec))]
    index = []
    for i, rec in enumerate(recordings):
        rec_dir = out / f"rec_{rec.subject_id if len(recordings) > 1 else 'main'}"
        paths = pw_io.write_recording(rec, rec_dir)
        index.append({"subject_id": rec.subject_id, **paths})
    pw_io.write_json({"recordings": index}, out / "corpus_index.json")
    print(f"wrote {len(recordings)} recording(s) to {out}")


def cmd_sync(args) -> None:
    optical = pw_io.read_channel_csv(args.optical, "optical", sample_rate=args.optical_rate)
    analog = pw_io.read_channel_csv(args.analog, "analog", sample_rate=args.analog_rate)

    def window(series, span):
        lo = series.index_at(span[0])
        hi = series.index_at(span[1])
        from .core import SampleSeries
        return SampleSeries(series.channel_name, series.sample_rate,
                            series.start_time + lo / series.sample_rate,
                            series.samples[lo : hi + 1])

    w0, w1 = _window_arg(args.stamp_window_start), _window_arg(args.stamp_window_end)
    start_pair = (detect_stamps(window(optical, w0), args.threshold, "optical"),
                  detect_stamps(window(analog, w0), args.threshold, "analog"))
    end_pair = (detect_stamps(window(optical, w1), args.threshold, "optical"),
                detect_stamps(window(analog, w1), args.threshold, "analog"))
    fit = fit_clock(start_pair, end_pair)
    payload = {"offset_s": fit.model.offset, "drift": fit.model.drift,
               "residual_s": fit.residual_s, "n_matched": fit.n_matched}
    pw_io.write_json(payload, args.out)
    print(json.dumps(payload))


def cmd_segment(args) -> None:
    ppg = pw_io.read_channel_csv(args.input, "ppg", sample_rate=args.rate)
    troughs = detect_troughs(ppg)
    pulses = segment_pulses(ppg, troughs)
    pw_io.write_pulses_json(pulses, args.out)
    n_clean = sum(p.clean for p in pulses)
    print(f"{len(pulses)} pulses ({n_clean} clean) -> {args.out}")


def cmd_features(args) -> None:
    pulses = pw_io.read_pulses_json(args.pulses)
    rpeaks = None
    if args.ecg:
        ecg = pw_io.read_channel_csv(args.ecg, "ecg", sample_rate=args.ecg_rate)
        rpeaks = detect_rpeaks(ecg)
    annotations = pw_io.read_annotations_json(args.annotations) if args.annotations else ()
    from .core import baseline_mask
    clean = [p for p in pulses if p.clean]
    mask = baseline_mask(clean, annotations)
    baseline = fit_baseline_pca([p for p, ok in zip(clean, mask) if ok],
                                n=args.pca_n)
    table = compute_features(pulses, rpeaks=rpeaks, baseline=baseline,
                             segment_length=args.segment_length,
                             spectral_window=args.spectral_window,
                             anchor=args.anchor)
    pw_io.write_feature_csv(table, args.out)
    print(f"{len(table)} pulses x 12 features -> {args.out}")


def cmd_zscore(args) -> None:
    table = pw_io.read_feature_csv(args.features)
    anchor = args.anchor if args.anchor is not None else float(table.times[0])
    z_cols = {}
    for name, col in table.columns.items():
        defined = np.flatnonzero(np.isfinite(col))
        zcol = np.full(len(col), np.nan)
        if len(defined):
            series = FeatureSeries(name, table.times[defined], col[defined])
            zcol[defined] = zscore(series, segment_length=args.segment_length,
                                   anchor=anchor).zvalues
        z_cols[name] = zcol
    if table.pulse_widths is not None:
        ends = table.times + table.pulse_widths
    else:
        ends = np.append(table.times[1:], table.times[-1])
    pw_io.write_zscore_csv(table.times, ends, z_cols, args.out)
    print(f"z-scores for {len(table)} pulses -> {args.out}")


def cmd_screen(args) -> None:
    times, ends, columns = pw_io.read_zscore_csv(args.zscores)
    annotations = pw_io.read_annotations_json(args.annotations)
    mask = baseline_mask_intervals(times, ends, annotations)
    reports = {}
    for name, zvals in columns.items():
        series = ZScoreSeries(name, times, zvals)
        reports[name] = [anova_screen(series, ann, mask) for ann in annotations]
    table = aggregate_table(reports)
    pw_io.write_json({"features": table.as_dict()}, args.out)
    print(f"screened {len(annotations)} seizure(s) -> {args.out}")


def _load_training_windows(inputs: list[dict], names) -> WindowedDataset:
    parts = []
    for item in inputs:
        times, _ends, columns = pw_io.read_zscore_csv(item["zscores"])
        annotations = (pw_io.read_annotations_json(item["annotations"])
                       if item.get("annotations") else ())
        zmatrix = np.column_stack([columns[n] for n in names])
        parts.append(make_windows(times, zmatrix, annotations, names))
    return _concat_datasets(parts)


def cmd_train(args) -> None:
    with open(args.config) as fh:
        cfg = json.load(fh)
    names = feature_set_names(args.features)
    dataset = _load_training_windows(cfg["inputs"], names)
    if len(dataset) == 0:
        raise DataError("no training windows could be built from the inputs")
    tc = TrainConfig(
        epochs=cfg.get("epochs", 100), batch_size=cfg.get("batch_size", 32),
        learning_rate=cfg.get("learning_rate", 1e-3), seed=cfg.get("seed", 0),
        val_fraction=cfg.get("val_fraction", 0.1), patience=cfg.get("patience", 10),
    )
    result = train(dataset, tc)
    pw_io.write_model_json(result.params, args.out,
                           extra={"train_losses": result.train_losses,
                                  "val_losses": result.val_losses})
    print(f"trained on {len(dataset)} windows -> {args.out}")


def cmd_eval(args) -> None:
    params = pw_io.read_model_json(args.model)
    names = params.feature_names
    times, _ends, columns = pw_io.read_zscore_csv(args.test)
    annotations = (pw_io.read_annotations_json(args.annotations)
                   if args.annotations else ())
    zmatrix = np.column_stack([columns[n] for n in names])
    dataset = make_windows(times, zmatrix, annotations, names)
    if len(dataset) == 0:
        raise DataError("test span yields no complete windows")
    probs = predict(dataset, params)
    alarm_cfg = AlarmConfig(threshold=args.threshold,
                            min_consecutive=args.min_consecutive,
                            refractory_s=args.refractory)
    events = alarms(probs, dataset.window_times, alarm_cfg.threshold,
                    alarm_cfg.min_consecutive, alarm_cfg.refractory_s)
    total_h = args.total_hours or (times[-1] - times[0]) / 3600.0
    metrics = evaluate(events, annotations, total_h)
    payload = metrics.as_dict()
    payload["alarm_times"] = events
    pw_io.write_json(payload, args.out)
    print(json.dumps(metrics.as_dict()))


def cmd_run(args) -> None:
    with open(args.config) as fh:
        config = json.load(fh)
    manifest = run_pipeline(config, args.out)
    print(f"pipeline complete: {len(manifest['artifacts'])} artifacts in {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulsewatch",
        description="PPG/ECG pulse morphology analysis and seizure detection",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording or corpus")
    p.add_argument("script", help="PhysioScript or corpus JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sync", help="fit the optical/analog clock model")
    p.add_argument("optical", help="PPG-side stamp channel CSV")
    p.add_argument("analog", help="EEG-machine stamp channel CSV")
    p.add_argument("--stamp-window-start", required=True, metavar="A,B")
    p.add_argument("--stamp-window-end", required=True, metavar="C,D")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--optical-rate", type=float, default=None)
    p.add_argument("--analog-rate", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("segment", help="detect troughs and cut pulses")
    p.add_argument("input", help="PPG channel CSV")
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="compute the 12-feature table")
    p.add_argument("pulses", help="pulses.json from segment")
    p.add_argument("--ecg", default=None)
    p.add_argument("--ecg-rate", type=float, default=None)
    p.add_argument("--annotations", default=None)
    p.add_argument("--pca-n", type=int, default=100)
    p.add_argument("--segment-length", type=float, default=300.0)
    p.add_argument("--spectral-window", type=float, default=120.0)
    p.add_argument("--anchor", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("zscore", help="previous-segment z-scores")
    p.add_argument("features", help="features.csv")
    p.add_argument("--segment-length", type=float, default=300.0)
    p.add_argument("--anchor", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_zscore)

    p = sub.add_parser("screen", help="ANOVA significance table")
    p.add_argument("zscores", help="zscores.csv")
    p.add_argument("annotations", help="annotations.json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("train", help="train the LSTM detector")
    p.add_argument("--features", type=int, choices=(7, 12), required=True)
    p.add_argument("--config", required=True, help="train.json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a span")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True, help="zscores.csv of the test span")
    p.add_argument("--annotations", default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-consecutive", type=int, default=3)
    p.add_argument("--refractory", type=float, default=300.0)
    p.add_argument("--total-hours", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except PulsewatchError as exc:
        for etype, code in EXIT_CODES.items():
            if isinstance(exc, etype):
                log.error("%s: %s", type(exc).__name__, exc)
                return code
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
