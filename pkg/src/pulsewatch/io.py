"""File formats: channel CSVs, annotation sidecars, pulse/feature/z-score
tables, model and metrics JSON.

Floats are written with ``repr`` (shortest round-trip form) so identical
pipeline runs produce byte-identical files.  Empty CSV cells are undefined
markers and read back as NaN.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
import numpy as np

from .core import DataError, Recording, SampleSeries, SeizureAnnotation
from .detector import LstmLayerParams, LstmParams, PARAM_FIELDS
from .features import FEATURE_NAMES, FeatureTable
from .segmentation import Pulse


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


# --------------------------------------------------------------------------
# Channels and annotations


def read_channel_csv(path, channel_name: str, sample_rate: float | None = None,
                     start_time: float = 0.0) -> SampleSeries:
    """Load one channel.

    With a ``t,value`` header the timebase comes from the t column (which
    must be uniform and monotone); headerless files are plain value columns
    and need ``sample_rate``.
    """
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    has_header = first.lower().replace(" ", "").startswith("t,")
    data = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2)
    if has_header:
        t, values = data[:, 0], data[:, 1]
        if len(t) < 2:
            raise DataError(f"{path}: need at least 2 samples")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise DataError(f"{path}: time column must be strictly increasing")
        step = float(np.median(steps))
        if np.max(np.abs(steps - step)) > 0.01 * step:
            raise DataError(f"{path}: time column is not uniformly sampled")
        return SampleSeries(channel_name, 1.0 / step, float(t[0]), values)
    if sample_rate is None:
        raise DataError(f"{path}: headerless channel needs an explicit sample rate")
    return SampleSeries(channel_name, sample_rate, start_time, data[:, 0])


def write_channel_csv(series: SampleSeries, path) -> None:
    times = series.times()
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in zip(times, series.samples):
            writer.writerow([_fmt(t), _fmt(v)])


def read_annotations_json(path) -> tuple[SeizureAnnotation, ...]:
    with Path(path).open() as fh:
        raw = json.load(fh)
    return tuple(SeizureAnnotation(a["onset"], a["offset"], a.get("label", "seizure"))
                 for a in raw)


def write_annotations_json(annotations, path) -> None:
    payload = [{"onset": a.onset, "offset": a.offset, "label": a.label}
               for a in annotations]
    with Path(path).open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_recording(rec: Recording, out_dir) -> dict:
    """Write ppg.csv / ecg.csv / annotations.json; returns the path map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"ppg": out_dir / "ppg.csv", "annotations": out_dir / "annotations.json"}
    write_channel_csv(rec.ppg, paths["ppg"])
    if rec.ecg is not None:
        paths["ecg"] = out_dir / "ecg.csv"
        write_channel_csv(rec.ecg, paths["ecg"])
    write_annotations_json(rec.annotations, paths["annotations"])
    return {k: str(v) for k, v in paths.items()}


# --------------------------------------------------------------------------
# Pulses


def write_pulses_json(pulses: list[Pulse], path) -> None:
    payload = [{
        "trough_time": p.trough_time,
        "next_trough_time": p.next_trough_time,
        "systolic_peak_time": p.systolic_peak_time,
        "systolic_peak_value": p.systolic_peak_value,
        "trough_value": p.trough_value,
        "notch_count": p.notch_count,
        "clean": p.clean,
        "samples": [float(v) for v in p.samples],
    } for p in pulses]
    with Path(path).open("w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_pulses_json(path) -> list[Pulse]:
    with Path(path).open() as fh:
        raw = json.load(fh)
    return [Pulse(
        trough_time=d["trough_time"],
        next_trough_time=d["next_trough_time"],
        systolic_peak_time=d["systolic_peak_time"],
        systolic_peak_value=d["systolic_peak_value"],
        trough_value=d["trough_value"],
        notch_count=d["notch_count"],
        samples=np.array(d["samples"]),
        clean=d["clean"],
    ) for d in raw]


# --------------------------------------------------------------------------
# Feature / z-score tables


def write_feature_csv(table: FeatureTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pulse_time", *FEATURE_NAMES])
        for i, t in enumerate(table.times):
            row = [_fmt(t)] + [_fmt(table.columns[n][i]) for n in FEATURE_NAMES]
            writer.writerow(row)


def read_feature_csv(path) -> FeatureTable:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    names = header[1:]
    times = np.array([float(r[0]) for r in rows])
    columns = {}
    for j, name in enumerate(names, start=1):
        columns[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
    widths = 1.0 / columns["HR"] if "HR" in columns else None
    return FeatureTable(times=times, columns=columns, pulse_widths=widths)


def write_zscore_csv(times, pulse_ends, columns: dict, path) -> None:
    names = [n for n in FEATURE_NAMES if n in columns]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pulse_time", "pulse_end", *names])
        for i, (t, e) in enumerate(zip(times, pulse_ends)):
            writer.writerow([_fmt(t), _fmt(e)] + [_fmt(columns[n][i]) for n in names])


def read_zscore_csv(path) -> tuple[np.ndarray, np.ndarray, dict]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    times = np.array([float(r[0]) for r in rows])
    ends = np.array([float(r[1]) for r in rows])
    columns = {}
    for j, name in enumerate(header[2:], start=2):
        columns[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
    return times, ends, columns


def write_matrix_csv(matrix: np.ndarray, path, header: list[str] | None = None,
                     row_labels: list[str] | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for i, row in enumerate(np.atleast_2d(matrix)):
            cells = [_fmt(v) for v in row]
            if row_labels is not None:
                cells = [row_labels[i]] + cells
            writer.writerow(cells)


# --------------------------------------------------------------------------
# Models and JSON reports


def _layer_to_dict(layer: LstmLayerParams) -> dict:
    return {name: getattr(layer, name).tolist() for name in PARAM_FIELDS}


def _layer_from_dict(d: dict) -> LstmLayerParams:
    return LstmLayerParams(**{name: np.array(d[name]) for name in PARAM_FIELDS})


def write_model_json(params: LstmParams, path, extra: dict | None = None) -> None:
    payload = {
        "feature_names": list(params.feature_names),
        "layer1": _layer_to_dict(params.layer1),
        "layer2": _layer_to_dict(params.layer2),
        "w_out": params.w_out.tolist(),
        "b_out": params.b_out.tolist(),
        "shapes": {
            "layer1_hidden": params.layer1.hidden,
            "layer2_hidden": params.layer2.hidden,
            "input_dim": params.layer1.input_dim,
        },
    }
    if extra:
        payload.update(extra)
    with Path(path).open("w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def read_model_json(path) -> LstmParams:
    with Path(path).open() as fh:
        d = json.load(fh)
    return LstmParams(
        layer1=_layer_from_dict(d["layer1"]),
        layer2=_layer_from_dict(d["layer2"]),
        w_out=np.array(d["w_out"]),
        b_out=np.array(d["b_out"]),
        feature_names=tuple(d["feature_names"]),
    )


def write_json(payload: dict, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
