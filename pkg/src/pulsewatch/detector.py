"""Two-layer LSTM seizure detector over sliding windows of z-score vectors.

The network is implemented directly in numpy: layer 1 has as many hidden
units as input features (7 or 12), layer 2 has 5, and a logistic output head
reads the final hidden state.  Training is Adam on class-weighted binary
cross-entropy with inverted dropout (keep 0.8) on layer-1 outputs, and
backpropagation through time is written out by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .core import DataError, SeizureAnnotation

WINDOW_LENGTH = 60
WINDOW_STRIDE = 10
LAYER2_HIDDEN = 5
DROPOUT_KEEP = 0.8
FORGET_BIAS_INIT = 1.0

DEFAULT_ALARM_THRESHOLD = 0.5
DEFAULT_MIN_CONSECUTIVE = 3
DEFAULT_REFRACTORY_S = 300.0
TP_MATCH_EARLY_S = 60.0

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_FIELDS = ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class LstmLayerParams:
    """Gate weight matrices acting on [h_prev, x] plus biases, one layer."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]


@dataclass
class LstmParams:
    layer1: LstmLayerParams
    layer2: LstmLayerParams
    w_out: np.ndarray        # (hidden2,)
    b_out: np.ndarray        # shape (1,)
    feature_names: tuple[str, ...] = ()

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in (self.layer1, self.layer2):
            out.extend(getattr(layer, name) for name in PARAM_FIELDS)
        out.append(self.w_out)
        out.append(self.b_out)
        return out

    def copy(self) -> "LstmParams":
        def dup(layer):
            return LstmLayerParams(**{n: getattr(layer, n).copy() for n in PARAM_FIELDS})

        return LstmParams(dup(self.layer1), dup(self.layer2),
                          self.w_out.copy(), self.b_out.copy(), self.feature_names)


def _init_layer(hidden: int, input_dim: int, rng: np.random.Generator) -> LstmLayerParams:
    fan_in = hidden + input_dim
    scale = 1.0 / np.sqrt(fan_in)
    weights = {n: rng.uniform(-scale, scale, size=(hidden, fan_in))
               for n in PARAM_FIELDS[:4]}
    biases = {n: np.zeros(hidden) for n in PARAM_FIELDS[4:]}
    biases["b_f"] = np.full(hidden, FORGET_BIAS_INIT)
    return LstmLayerParams(**weights, **biases)


def init_params(feature_names, hidden2: int = LAYER2_HIDDEN,
                seed: int = 0) -> LstmParams:
    """Fresh parameters: uniform +-1/sqrt(fan_in), forget bias 1.0."""
    rng = np.random.default_rng(seed)
    n_features = len(feature_names)
    layer1 = _init_layer(n_features, n_features, rng)
    layer2 = _init_layer(hidden2, n_features, rng)
    scale = 1.0 / np.sqrt(hidden2)
    w_out = rng.uniform(-scale, scale, size=hidden2)
    return LstmParams(layer1, layer2, w_out, np.zeros(1), tuple(feature_names))


def lstm_cell(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
              layer: LstmLayerParams) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step: gate activations on [h_prev, x], then the state update
    c = f*c_prev + i*c_tilde and h = o*tanh(c).
    """
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h_prev))
            and np.all(np.isfinite(c_prev))):
        raise ValueError("non-finite input to lstm_cell")
    a = np.concatenate([h_prev, x])
    f = _sigmoid(layer.w_f @ a + layer.b_f)
    i = _sigmoid(layer.w_i @ a + layer.b_i)
    c_tilde = np.tanh(layer.w_c @ a + layer.b_c)
    o = _sigmoid(layer.w_o @ a + layer.b_o)
    c = f * c_prev + i * c_tilde
    h = o * np.tanh(c)
    return h, c


def _layer_forward(x: np.ndarray, layer: LstmLayerParams):
    """Unroll one layer over a batch: x is (B, T, D), returns h (B, T, H)."""
    batch, steps, _ = x.shape
    hidden = layer.hidden
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    cache = {"a": [], "f": [], "i": [], "g": [], "o": [],
             "c_prev": [], "tanh_c": []}
    hs = np.empty((batch, steps, hidden))
    for n in range(steps):
        a = np.concatenate([h, x[:, n, :]], axis=1)
        f = _sigmoid(a @ layer.w_f.T + layer.b_f)
        i = _sigmoid(a @ layer.w_i.T + layer.b_i)
        g = np.tanh(a @ layer.w_c.T + layer.b_c)
        o = _sigmoid(a @ layer.w_o.T + layer.b_o)
        cache["c_prev"].append(c)
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        hs[:, n, :] = h
        for key, val in (("a", a), ("f", f), ("i", i), ("g", g), ("o", o),
                         ("tanh_c", tanh_c)):
            cache[key].append(val)
    return hs, cache


def _layer_backward(cache, layer: LstmLayerParams, dh_ext: np.ndarray):
    """BPTT through one layer.

    ``dh_ext`` carries the external gradient arriving at every step's hidden
    output.  Returns the gradient w.r.t. the layer inputs and the parameter
    gradients.
    """
    batch, steps, hidden = dh_ext.shape
    input_dim = layer.input_dim
    grads = {n: np.zeros_like(getattr(layer, n)) for n in PARAM_FIELDS}
    dx = np.empty((batch, steps, input_dim))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for n in reversed(range(steps)):
        a = cache["a"][n]
        f, i, g, o = cache["f"][n], cache["i"][n], cache["g"][n], cache["o"][n]
        tanh_c = cache["tanh_c"][n]
        c_prev = cache["c_prev"][n]

        dh = dh_ext[:, n, :] + dh_next
        do = dh * tanh_c
        dzo = do * o * (1.0 - o)
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        df = dc * c_prev
        dzf = df * f * (1.0 - f)
        di = dc * g
        dzi = di * i * (1.0 - i)
        dg = dc * i
        dzg = dg * (1.0 - g * g)

        grads["w_f"] += dzf.T @ a
        grads["w_i"] += dzi.T @ a
        grads["w_c"] += dzg.T @ a
        grads["w_o"] += dzo.T @ a
        grads["b_f"] += dzf.sum(axis=0)
        grads["b_i"] += dzi.sum(axis=0)
        grads["b_c"] += dzg.sum(axis=0)
        grads["b_o"] += dzo.sum(axis=0)

        da = dzf @ layer.w_f + dzi @ layer.w_i + dzg @ layer.w_c + dzo @ layer.w_o
        dh_next = da[:, :hidden]
        dx[:, n, :] = da[:, hidden:]
        dc_next = dc * f
    return dx, grads


def _forward_batch(x: np.ndarray, params: LstmParams, dropout_mask=None,
                   want_cache: bool = False):
    h1, cache1 = _layer_forward(x, params.layer1)
    h1d = h1 if dropout_mask is None else h1 * dropout_mask
    h2, cache2 = _layer_forward(h1d, params.layer2)
    logits = h2[:, -1, :] @ params.w_out + params.b_out[0]
    probs = _sigmoid(logits)
    if not want_cache:
        return probs, logits
    cache = {"cache1": cache1, "cache2": cache2, "h1": h1,
             "h2_last": h2[:, -1, :], "mask": dropout_mask, "steps": x.shape[1]}
    return probs, logits, cache


def forward(window: np.ndarray, params: LstmParams,
            dropout_mask: np.ndarray | None = None):
    """Seizure probability for one window (T, F) or a batch (B, T, F).

    Evaluation mode is ``dropout_mask=None`` (identical to an all-ones mask
    thanks to inverted dropout scaling).
    """
    x = np.asarray(window, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input window")
    probs, _ = _forward_batch(x, params, dropout_mask)
    return float(probs[0]) if single else probs


def _backward_batch(cache, params: LstmParams, dlogits: np.ndarray):
    h2_last = cache["h2_last"]
    steps = cache["steps"]
    batch, hidden2 = h2_last.shape
    dW_out = h2_last.T @ dlogits
    db_out = np.array([dlogits.sum()])
    dh2_ext = np.zeros((batch, steps, hidden2))
    dh2_ext[:, -1, :] = dlogits[:, None] * params.w_out[None, :]
    dh1d, grads2 = _layer_backward(cache["cache2"], params.layer2, dh2_ext)
    if cache["mask"] is not None:
        dh1d = dh1d * cache["mask"]
    _, grads1 = _layer_backward(cache["cache1"], params.layer1, dh1d)
    flat = [grads1[n] for n in PARAM_FIELDS] + [grads2[n] for n in PARAM_FIELDS]
    flat += [dW_out, db_out]
    return flat


def weighted_bce_loss(logits: np.ndarray, labels: np.ndarray,
                      weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Class-weighted binary cross-entropy from logits (numerically stable).

    Returns the weighted-mean loss and its gradient w.r.t. the logits.
    """
    y = labels.astype(float)
    losses = y * _softplus(-logits) + (1.0 - y) * _softplus(logits)
    wsum = float(weights.sum())
    loss = float((weights * losses).sum() / wsum)
    probs = _sigmoid(logits)
    dlogits = weights * (probs - y) / wsum
    return loss, dlogits


def loss_and_grads(x: np.ndarray, labels: np.ndarray, params: LstmParams,
                   weights: np.ndarray, dropout_mask=None):
    """Loss plus parameter gradients in ``params.arrays()`` order."""
    _, logits, cache = _forward_batch(x, params, dropout_mask, want_cache=True)
    loss, dlogits = weighted_bce_loss(logits, labels, weights)
    return loss, _backward_batch(cache, params, dlogits)


# --------------------------------------------------------------------------
# Windowing


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding windows of pulse-aligned z-vectors with overlap labels."""

    windows: np.ndarray            # (n, T, F)
    labels: np.ndarray             # (n,) bool
    window_times: np.ndarray       # (n,) time of each window's last pulse
    window_start_times: np.ndarray
    feature_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)


def make_windows(times: np.ndarray, zmatrix: np.ndarray,
                 annotations, feature_names,
                 length: int = WINDOW_LENGTH,
                 stride: int = WINDOW_STRIDE) -> WindowedDataset:
    """Cut runs of gap-free consecutive pulses into sliding windows.

    A pulse with any NaN among the selected features breaks the run; windows
    never span a break.  A window is labeled positive when its time span
    overlaps any annotated seizure.
    """
    times = np.asarray(times, dtype=float)
    zmatrix = np.asarray(zmatrix, dtype=float)
    usable = np.all(np.isfinite(zmatrix), axis=1)

    wins, labels, t_end, t_start = [], [], [], []
    run_start = None
    edges = np.flatnonzero(np.diff(usable.astype(int)))
    bounds = np.concatenate([[-1], edges, [len(usable) - 1]])
    for a, b in zip(bounds[:-1] + 1, bounds[1:] + 1):
        if not usable[a]:
            continue
        for k in range(a, b - length + 1, stride):
            seg = zmatrix[k : k + length]
            t0, t1 = times[k], times[k + length - 1]
            overlap = any(ann.onset <= t1 and ann.offset >= t0 for ann in annotations)
            wins.append(seg)
            labels.append(overlap)
            t_start.append(t0)
            t_end.append(t1)
    if wins:
        windows = np.stack(wins)
    else:
        windows = np.empty((0, length, zmatrix.shape[1]))
    return WindowedDataset(
        windows=windows,
        labels=np.array(labels, dtype=bool),
        window_times=np.array(t_end),
        window_start_times=np.array(t_start),
        feature_names=tuple(feature_names),
    )


# --------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.1
    patience: int = 10
    hidden2: int = LAYER2_HIDDEN
    dropout_keep: float = DROPOUT_KEEP


@dataclass
class TrainResult:
    params: LstmParams
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Per-sample weights inversely proportional to class frequency,
    normalized so that the weights average to one.
    """
    n = len(labels)
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("training data must contain both classes")
    w = np.where(labels, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return w


def train(dataset: WindowedDataset, config: TrainConfig | None = None) -> TrainResult:
    """Adam on class-weighted BCE with early stopping on a validation split."""
    config = config or TrainConfig()
    x_all = dataset.windows
    y_all = dataset.labels
    if len(np.unique(y_all)) < 2:
        raise DataError("training data must contain both classes")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(y_all))
    n_val = int(round(config.val_fraction * len(y_all)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(np.unique(y_all[train_idx])) < 2:  # rebalance a degenerate split
        val_idx, train_idx = order[:0], order
    x_train, y_train = x_all[train_idx], y_all[train_idx]

    weights_all = class_weights(y_train)
    params = init_params(dataset.feature_names, hidden2=config.hidden2,
                         seed=config.seed)
    arrays = params.arrays()
    m = [np.zeros_like(a) for a in arrays]
    v = [np.zeros_like(a) for a in arrays]
    step = 0

    result = TrainResult(params=params)
    best_val = np.inf
    best_params = params.copy()
    stale = 0
    h1 = params.layer1.hidden

    for _ in range(config.epochs):
        perm = rng.permutation(len(y_train))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(perm), config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            xb, yb, wb = x_train[idx], y_train[idx], weights_all[idx]
            mask = (rng.random((len(idx), xb.shape[1], h1)) < config.dropout_keep)
            mask = mask / config.dropout_keep
            loss, grads = loss_and_grads(xb, yb, params, wb, mask)
            step += 1
            lr_t = config.learning_rate * (
                np.sqrt(1.0 - ADAM_BETA2**step) / (1.0 - ADAM_BETA1**step)
            )
            for a, g, mi, vi in zip(arrays, grads, m, v):
                mi *= ADAM_BETA1
                mi += (1.0 - ADAM_BETA1) * g
                vi *= ADAM_BETA2
                vi += (1.0 - ADAM_BETA2) * g * g
                a -= lr_t * mi / (np.sqrt(vi) + ADAM_EPS)
            epoch_loss += loss
            n_batches += 1
        result.train_losses.append(epoch_loss / max(1, n_batches))

        if len(val_idx):
            _, logits = _forward_batch(x_all[val_idx], params)
            wv = np.ones(len(val_idx))
            val_loss, _ = weighted_bce_loss(logits, y_all[val_idx], wv)
            result.val_losses.append(val_loss)
            if val_loss < best_val - 1e-6:
                best_val = val_loss
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break

    if len(val_idx):
        result.params = best_params
    return result


def predict(dataset_or_windows, params: LstmParams,
            batch_size: int = 256) -> np.ndarray:
    """Evaluation-mode probabilities for a window stack."""
    x = dataset_or_windows.windows if hasattr(dataset_or_windows, "windows") \
        else np.asarray(dataset_or_windows, dtype=float)
    out = np.empty(len(x))
    for lo in range(0, len(x), batch_size):
        probs, _ = _forward_batch(x[lo : lo + batch_size], params)
        out[lo : lo + len(probs)] = probs
    return out


# --------------------------------------------------------------------------
# Alarms and evaluation


@dataclass(frozen=True)
class AlarmConfig:
    threshold: float = DEFAULT_ALARM_THRESHOLD
    min_consecutive: int = DEFAULT_MIN_CONSECUTIVE
    refractory_s: float = DEFAULT_REFRACTORY_S


def alarms(probabilities, window_times, threshold: float = DEFAULT_ALARM_THRESHOLD,
           min_consecutive: int = DEFAULT_MIN_CONSECUTIVE,
           refractory_s: float = DEFAULT_REFRACTORY_S) -> list[float]:
    """Alarm times: raised when ``min_consecutive`` consecutive windows exceed
    the threshold, then suppressed for ``refractory_s`` seconds.
    """
    run = 0
    last = -np.inf
    out: list[float] = []
    for p, t in zip(probabilities, window_times):
        run = run + 1 if p > threshold else 0
        if run >= min_consecutive and t - last >= refractory_s:
            out.append(float(t))
            last = t
    return out


@dataclass(frozen=True)
class EvalMetrics:
    sensitivity: float | None
    ppv: float | None
    far: float | None
    tp: int
    fp: int
    fn: int

    def as_dict(self) -> dict:
        return {"sensitivity": self.sensitivity, "ppv": self.ppv, "far": self.far,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def evaluate(alarm_times, annotations, total_hours: float) -> EvalMetrics:
    """Seizure-level detection metrics.

    A seizure counts as detected when any alarm falls inside
    [onset - 60 s, offset]; alarms matching no seizure are false positives.
    """
    alarm_times = list(alarm_times)
    matched_alarm = [False] * len(alarm_times)
    tp = 0
    for ann in annotations:
        hit = False
        for j, t in enumerate(alarm_times):
            if ann.onset - TP_MATCH_EARLY_S <= t <= ann.offset:
                matched_alarm[j] = True
                hit = True
        tp += int(hit)
    fn = len(annotations) - tp
    fp = sum(not m for m in matched_alarm)
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    ppv = tp / (tp + fp) if (tp + fp) > 0 else None
    far = fp / total_hours if total_hours > 0 else None
    return EvalMetrics(sensitivity=sensitivity, ppv=ppv, far=far,
                       tp=tp, fp=fp, fn=fn)


# --------------------------------------------------------------------------
# Random 2-hour holdout protocol


@dataclass(frozen=True)
class RecordingWindows:
    """One recording's windows plus everything needed to score alarms."""

    dataset: WindowedDataset
    annotations: tuple[SeizureAnnotation, ...]
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class HoldoutResult:
    per_repetition: list[EvalMetrics]
    seizures_per_repetition: list[int]
    spans: list[tuple[float, float]]

    def _mean(self, attr: str) -> float | None:
        vals = [getattr(m, attr) for m in self.per_repetition
                if getattr(m, attr) is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def mean_sensitivity(self) -> float | None:
        return self._mean("sensitivity")

    @property
    def mean_ppv(self) -> float | None:
        return self._mean("ppv")

    @property
    def mean_far(self) -> float | None:
        return self._mean("far")

    def as_dict(self) -> dict:
        return {
            "mean_sensitivity": self.mean_sensitivity,
            "mean_ppv": self.mean_ppv,
            "mean_far": self.mean_far,
            "repetitions": [m.as_dict() for m in self.per_repetition],
            "seizures_per_repetition": self.seizures_per_repetition,
            "test_spans": self.spans,
        }


def _concat_datasets(parts: list[WindowedDataset]) -> WindowedDataset:
    return WindowedDataset(
        windows=np.concatenate([p.windows for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        window_times=np.concatenate([p.window_times for p in parts]),
        window_start_times=np.concatenate([p.window_start_times for p in parts]),
        feature_names=parts[0].feature_names,
    )


def holdout_protocol(runs: list[RecordingWindows], repetitions: int = 20,
                     span_s: float = 7200.0,
                     train_config: TrainConfig | None = None,
                     alarm_config: AlarmConfig | None = None,
                     seed: int = 0) -> HoldoutResult:
    """Random continuous 2-hour holdout, repeated.

    Recordings are laid end to end on a global timeline; each repetition
    removes one uniformly placed contiguous span as the test set, trains on
    windows fully outside it, and evaluates alarms inside it.  Windows that
    straddle a span edge belong to neither side.
    """
    train_config = train_config or TrainConfig()
    alarm_config = alarm_config or AlarmConfig()
    total = sum(r.duration for r in runs)
    if total < 2 * span_s:
        raise DataError(
            f"holdout needs at least {2 * span_s / 3600:.0f} h of data, got {total / 3600:.2f} h"
        )

    offsets = np.concatenate([[0.0], np.cumsum([r.duration for r in runs])[:-1]])
    rng = np.random.default_rng(seed)
    starts = rng.uniform(0.0, total - span_s, size=repetitions)

    metrics: list[EvalMetrics] = []
    seizure_counts: list[int] = []
    spans: list[tuple[float, float]] = []
    for rep in range(repetitions):
        s0 = float(starts[rep])
        s1 = s0 + span_s
        spans.append((s0, s1))

        train_parts = []
        test_parts: list[tuple[RecordingWindows, float, np.ndarray]] = []
        test_seizures: list[SeizureAnnotation] = []
        for run, off in zip(runs, offsets):
            shift = off - run.t_start
            g_start = run.dataset.window_start_times + shift
            g_end = run.dataset.window_times + shift
            inside = (g_start >= s0) & (g_end <= s1)
            outside = (g_end < s0) | (g_start > s1)
            ds = run.dataset
            if outside.any():
                train_parts.append(WindowedDataset(
                    windows=ds.windows[outside], labels=ds.labels[outside],
                    window_times=ds.window_times[outside],
                    window_start_times=ds.window_start_times[outside],
                    feature_names=ds.feature_names))
            for ann in run.annotations:
                if s0 <= ann.onset + shift < s1:
                    test_seizures.append(SeizureAnnotation(
                        ann.onset + shift, ann.offset + shift, ann.label))
            if inside.any():
                test_parts.append((run, shift, inside))

        dataset = _concat_datasets(train_parts)
        cfg = TrainConfig(**{**train_config.__dict__, "seed": train_config.seed + rep})
        trained = train(dataset, cfg).params

        alarm_times: list[float] = []
        for run, shift, inside in test_parts:
            probs = predict(run.dataset.windows[inside], trained)
            times = run.dataset.window_times[inside] + shift
            alarm_times.extend(alarms(probs, times,
                                      threshold=alarm_config.threshold,
                                      min_consecutive=alarm_config.min_consecutive,
                                      refractory_s=alarm_config.refractory_s))

        metrics.append(evaluate(sorted(alarm_times), test_seizures,
                                total_hours=span_s / 3600.0))
        seizure_counts.append(len(test_seizures))
    return HoldoutResult(per_repetition=metrics,
                         seizures_per_repetition=seizure_counts, spans=spans)
