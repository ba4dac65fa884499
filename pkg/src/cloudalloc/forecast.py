"""From-scratch LSTM demand forecaster with naive baselines.

Stacked LSTM layers feed a small ReLU dense head that emits the full forecast
horizon in one shot. Training is plain momentum SGD with cosine-annealed
learning rate and full backpropagation through time; gradients are exact and
checkable against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .trace import ScalerParams, WindowedDataset

CHECKPOINT_VERSION = "1"


class ForecastError(ValueError):
    pass


class MapeUndefinedError(ForecastError):
    """All evaluation targets are zero; MAPE has no value. RMSE is attached."""

    def __init__(self, rmse: float):
        super().__init__("MAPE undefined: every target is zero")
        self.rmse = rmse


@dataclass
class LstmLayerParams:
    """One LSTM layer. Gate order in the stacked matrices is (i, f, g, o)."""

    input_size: int
    hidden_size: int
    Wx: np.ndarray  # (input_size, 4*hidden)
    Wh: np.ndarray  # (hidden, 4*hidden)
    b: np.ndarray  # (4*hidden,)


@dataclass
class ForecastModel:
    lstm_layers: list
    dense_weights: list  # [(W, b), ...] ReLU between, linear output
    dropout_rate: float
    horizon: int
    input_size: int
    scaler: ScalerParams | None = None

    @property
    def layer_sizes(self):
        return tuple(layer.hidden_size for layer in self.lstm_layers)

    def params(self) -> dict:
        out = {}
        for i, layer in enumerate(self.lstm_layers):
            out[f"lstm{i}.Wx"] = layer.Wx
            out[f"lstm{i}.Wh"] = layer.Wh
            out[f"lstm{i}.b"] = layer.b
        for i, (w, b) in enumerate(self.dense_weights):
            out[f"dense{i}.W"] = w
            out[f"dense{i}.b"] = b
        return out


def init_model(
    layer_sizes=(128, 256, 128),
    horizon: int = 12,
    seed: int = 0,
    input_size: int = 14,
    dense_sizes=(64, 32),
    dropout_rate: float = 0.3,
) -> ForecastModel:
    """Build a model with uniform(+-1/sqrt(fan_in)) weights, forget biases 1."""
    if not layer_sizes or any(s <= 0 for s in layer_sizes):
        raise ForecastError(f"invalid layer sizes {layer_sizes}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ForecastError("dropout_rate must be in [0, 1)")
    rng = np.random.default_rng(seed)
    layers = []
    d = input_size
    for h in layer_sizes:
        Wx = nn.uniform_init(rng, (d, 4 * h), d)
        Wh = nn.uniform_init(rng, (h, 4 * h), h)
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0  # forget gate
        layers.append(LstmLayerParams(d, h, Wx, Wh, b))
        d = h
    dense = []
    for out_size in tuple(dense_sizes) + (horizon,):
        W = nn.uniform_init(rng, (d, out_size), d)
        bias = np.zeros(out_size)
        dense.append((W, bias))
        d = out_size
    return ForecastModel(layers, dense, dropout_rate, horizon, input_size)


def _lstm_layer_forward(layer: LstmLayerParams, x: np.ndarray):
    """x: (B, T, D) -> hidden sequence (B, T, H) plus backward cache."""
    B, T, _ = x.shape
    H = layer.hidden_size
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        xt = x[:, t, :]
        z = xt @ layer.Wx + h @ layer.Wh + layer.b
        i = nn.sigmoid(z[:, :H])
        f = nn.sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = nn.sigmoid(z[:, 3 * H :])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t, :] = h
        cache.append((xt, i, f, g, o, c_prev, tc, hs[:, t - 1, :] if t > 0 else np.zeros((B, H))))
    return hs, cache


def _lstm_layer_backward(layer: LstmLayerParams, cache, dhs: np.ndarray):
    """dhs: (B, T, H) upstream grads on the hidden sequence -> (dX, grads)."""
    B, T, H = dhs.shape
    dWx = np.zeros_like(layer.Wx)
    dWh = np.zeros_like(layer.Wh)
    db = np.zeros_like(layer.b)
    dx = np.empty((B, T, layer.input_size))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        xt, i, f, g, o, c_prev, tc, h_prev = cache[t]
        dh = dhs[:, t, :] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dWx += xt.T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t, :] = dz @ layer.Wx.T
        dh_next = dz @ layer.Wh.T
    return dx, (dWx, dWh, db)


def _dropout_mask(rng, shape, rate):
    # inverted dropout: scaling at train time, identity at inference
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward_batch(model: ForecastModel, x: np.ndarray, training: bool, rng=None):
    """x: (B, T, D) -> (predictions (B, horizon), cache)."""
    caches = []
    masks = []
    h_seq = x
    for li, layer in enumerate(model.lstm_layers):
        h_seq, cache = _lstm_layer_forward(layer, h_seq)
        mask = None
        if training and model.dropout_rate > 0.0:
            mask = _dropout_mask(rng, h_seq.shape, model.dropout_rate)
            h_seq = h_seq * mask
        caches.append(cache)
        masks.append(mask)
    last = h_seq[:, -1, :]
    acts = [last]
    h = last
    n_dense = len(model.dense_weights)
    dense_masks = []
    for i, (w, b) in enumerate(model.dense_weights):
        h = h @ w + b
        if i < n_dense - 1:
            h = np.maximum(h, 0.0)
            mask = None
            if training and model.dropout_rate > 0.0:
                mask = _dropout_mask(rng, h.shape, model.dropout_rate)
                h = h * mask
            dense_masks.append(mask)
        acts.append(h)
    return h, (caches, masks, acts, dense_masks, x.shape)


def forward(model: ForecastModel, window: np.ndarray, training: bool = False, seed: int = 0):
    """Run one window (T, D) or a batch (B, T, D) through the model."""
    arr = np.asarray(window, dtype=float)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[2] != model.input_size:
        raise ForecastError(
            f"expected window shape (T, {model.input_size}), got {np.asarray(window).shape}"
        )
    rng = np.random.default_rng(seed) if training else None
    preds, _ = _forward_batch(model, arr, training, rng)
    return preds[0] if single else preds


def loss_and_gradients(model: ForecastModel, inputs: np.ndarray, targets: np.ndarray, dropout_rng=None):
    """MSE over the batch plus exact gradients for every parameter."""
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 3 or len(x) == 0:
        raise ForecastError("batch must be a non-empty (B, T, D) array")
    training = dropout_rng is not None and model.dropout_rate > 0.0
    preds, (caches, masks, acts, dense_masks, xshape) = _forward_batch(
        model, x, training, dropout_rng
    )
    resid = preds - y
    loss = float(np.mean(resid * resid))

    grads = {}
    delta = 2.0 * resid / resid.size
    n_dense = len(model.dense_weights)
    for i in range(n_dense - 1, -1, -1):
        w, _ = model.dense_weights[i]
        if i < n_dense - 1:
            if dense_masks[i] is not None:
                delta = delta * dense_masks[i]
            delta = delta * (acts[i + 1] > 0)
        grads[f"dense{i}.W"] = acts[i].T @ delta
        grads[f"dense{i}.b"] = delta.sum(axis=0)
        delta = delta @ w.T

    B, T, _ = xshape
    dhs = np.zeros((B, T, model.lstm_layers[-1].hidden_size))
    dhs[:, -1, :] = delta
    for li in range(len(model.lstm_layers) - 1, -1, -1):
        if masks[li] is not None:
            dhs = dhs * masks[li]
        dhs, (dWx, dWh, db) = _lstm_layer_backward(model.lstm_layers[li], caches[li], dhs)
        grads[f"lstm{li}.Wx"] = dWx
        grads[f"lstm{li}.Wh"] = dWh
        grads[f"lstm{li}.b"] = db
    return loss, grads


@dataclass
class TrainConfig:
    epochs: int = 100
    initial_lr: float = 0.001
    lr_min: float = 1e-5
    batch_size: int = 64
    seed: int = 0
    gradient_clip: float = 5.0
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 0:
            raise ForecastError("epochs must be >= 0")
        if self.initial_lr <= 0:
            raise ForecastError("initial_lr must be positive")


def cosine_lr(epoch: int, total_epochs: int, lr0: float, lr_min: float) -> float:
    """lr at epoch e: lr_min + (lr0 - lr_min)/2 * (1 + cos(pi*e/E))."""
    if total_epochs == 0:
        return lr0
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))


def train(model: ForecastModel, dataset: WindowedDataset, config: TrainConfig):
    """Momentum SGD over shuffled mini-batches; returns (model, loss curve)."""
    if len(dataset) == 0:
        raise ForecastError("dataset is empty")
    if config.epochs == 0:
        return model, []
    rng = np.random.default_rng(config.seed)
    opt = nn.MomentumSgd(model.params(), momentum=config.momentum, clip_norm=config.gradient_clip)
    curve = []
    n = len(dataset)
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.initial_lr, config.lr_min)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            drop_rng = np.random.default_rng(rng.integers(0, 2**63))
            loss, grads = loss_and_gradients(
                model, dataset.inputs[idx], dataset.targets[idx], dropout_rng=drop_rng
            )
            if not np.isfinite(loss):
                raise ForecastError(
                    f"training diverged at epoch {epoch} (loss={loss}); try a lower learning rate"
                )
            opt.step(grads, lr)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
    return model, curve


@dataclass
class ForecastMetrics:
    rmse: float
    mape: float  # percent
    n_evaluated: int
    n_excluded_zero_targets: int


def rmse_mape(preds: np.ndarray, targets: np.ndarray) -> ForecastMetrics:
    """RMSE over all points; MAPE over points with |target| > 1e-9."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    resid = preds - targets
    rmse = float(np.sqrt(np.mean(resid * resid)))
    nonzero = np.abs(targets) > 1e-9
    n_excluded = int((~nonzero).sum())
    if not nonzero.any():
        raise MapeUndefinedError(rmse)
    mape = float(np.mean(np.abs(resid[nonzero] / targets[nonzero]))) * 100.0
    return ForecastMetrics(rmse, mape, int(nonzero.sum()), n_excluded)


def predict_dataset(model: ForecastModel, dataset: WindowedDataset, batch_size: int = 256) -> np.ndarray:
    preds = np.empty_like(dataset.targets)
    for start in range(0, len(dataset), batch_size):
        batch = dataset.inputs[start : start + batch_size]
        out, _ = _forward_batch(model, batch, training=False)
        preds[start : start + len(batch)] = out
    return preds


def evaluate(model: ForecastModel, test: WindowedDataset) -> ForecastMetrics:
    if len(test) == 0:
        raise ForecastError("test dataset is empty")
    preds = predict_dataset(model, test)
    return rmse_mape(preds, test.targets)


def baseline_predict(kind: str, window_values: np.ndarray, horizon: int, k: int | None = None) -> np.ndarray:
    """Naive forecasts from the target history in one window.

    persistence repeats the last observed value; moving_average repeats the
    mean of the last k values.
    """
    values = np.asarray(window_values, dtype=float)
    if len(values) == 0:
        raise ForecastError("window is empty")
    if kind == "persistence":
        return np.full(horizon, values[-1])
    if kind == "moving_average":
        if not k:
            raise ForecastError("moving_average needs k >= 1")
        if k > len(values):
            raise ForecastError(f"k={k} exceeds window length {len(values)}")
        return np.full(horizon, float(values[-k:].mean()))
    raise ForecastError(f"unknown baseline kind {kind!r}")


def baseline_dataset_predict(kind: str, dataset: WindowedDataset, k: int | None = None) -> np.ndarray:
    col = dataset.inputs[:, :, _target_index(dataset)]
    preds = np.empty_like(dataset.targets)
    for i in range(len(dataset)):
        preds[i] = baseline_predict(kind, col[i], dataset.horizon, k)
    return preds


def _target_index(dataset: WindowedDataset) -> int:
    from .trace import COLUMNS

    return COLUMNS.index(dataset.target_metric)


def save_model(model: ForecastModel, path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "dense_sizes": [w.shape[1] for w, _ in model.dense_weights[:-1]],
        "horizon": model.horizon,
        "input_size": model.input_size,
        "dropout_rate": model.dropout_rate,
        "tensors": nn.tensors_to_json(model.params()),
    }
    if model.scaler is not None:
        payload["scaler"] = model.scaler.to_dict()
    nn.dump_checkpoint(path, payload)


def load_model(path) -> ForecastModel:
    payload = nn.load_checkpoint(path, CHECKPOINT_VERSION)
    model = init_model(
        layer_sizes=tuple(payload["layer_sizes"]),
        horizon=payload["horizon"],
        seed=0,
        input_size=payload["input_size"],
        dense_sizes=tuple(payload["dense_sizes"]),
        dropout_rate=payload["dropout_rate"],
    )
    tensors = nn.tensors_from_json(payload["tensors"])
    for name, param in model.params().items():
        param[...] = tensors[name]
    if "scaler" in payload:
        model.scaler = ScalerParams.from_dict(payload["scaler"])
    return model
