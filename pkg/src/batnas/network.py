"""Small recurrent forecaster trained from scratch.

Vanilla LSTM layers feeding dense layers feeding a single output unit.
Everything is plain numpy: forward pass, backpropagation through time,
inverted dropout on recurrent outputs, L2 weight decay, and fixed-rate
gradient descent with global-norm clipping. One network predicts one
value per input window.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import expit

from . import genome
from .data import FramedDataset, Scaler
from .errors import CheckpointError, ConfigError, DataError, DivergenceError
from .genome import ArchitectureSpec, DENSE, OUTPUT, RECURRENT, RELU, SIGMOID

logger = logging.getLogger(__name__)

_GATES = ("i", "f", "o", "g")

CHECKPOINT_MAGIC = "BATNAS-CKPT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Gradient-descent settings for one training run.

    ``dropout_rate`` is the probability of dropping an activation when
    ``dropout_mode`` is "drop" (the default), or the keep probability when
    it is "keep". The defaults mirror the usual regularization choices for
    this model family (rate 0.8, L2 lambda 0.01).
    """

    epochs: int = 200
    dropout_rate: float = 0.8
    dropout_mode: str = "drop"
    l2_lambda: float = 0.01
    learning_rate: float = 0.01
    batch_size: int | None = None
    rng_seed: int = 0
    grad_clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.dropout_mode not in ("drop", "keep"):
            raise ConfigError("dropout_mode must be 'drop' or 'keep'")
        p = self.drop_probability()
        if not 0.0 <= p < 1.0:
            raise ConfigError("dropout must leave a nonzero keep probability")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1 when given")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be > 0 or None")

    def drop_probability(self) -> float:
        if self.dropout_mode == "keep":
            return 1.0 - self.dropout_rate
        return self.dropout_rate


@dataclass
class Metrics:
    train_loss_history: list[float]
    final_train_rmse: float
    validation_rmse: float | None = None
    val_loss_history: list[float] | None = None


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class LSTMLayer:
    """One vanilla LSTM layer with per-gate parameter blocks."""

    def __init__(self, input_size: int, units: int, rng: np.random.Generator):
        self.input_size = input_size
        self.units = units
        self.W = {}
        self.U = {}
        self.b = {}
        for gate in _GATES:
            self.W[gate] = _glorot(rng, input_size, units, (input_size, units))
            self.U[gate] = _glorot(rng, units, units, (units, units))
            self.b[gate] = np.zeros(units)
        self.b["f"] += 1.0  # open forget gates so early gradients survive
        self._cache = None
        self.grads: dict[str, np.ndarray] = {}

    def named_parameters(self):
        for gate in _GATES:
            yield f"W{gate}", self.W[gate]
        for gate in _GATES:
            yield f"U{gate}", self.U[gate]
        for gate in _GATES:
            yield f"b{gate}", self.b[gate]

    def weight_names(self):
        return [f"W{g}" for g in _GATES] + [f"U{g}" for g in _GATES]

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        kind, gate = name[0], name[1]
        getattr(self, kind)[gate] = value

    def forward(self, x: np.ndarray, return_sequences: bool) -> np.ndarray:
        n, t, _ = x.shape
        u = self.units
        I = np.empty((n, t, u))
        F = np.empty((n, t, u))
        O = np.empty((n, t, u))
        G = np.empty((n, t, u))
        C = np.empty((n, t, u))
        CH = np.empty((n, t, u))
        H = np.empty((n, t, u))
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        for step in range(t):
            xt = x[:, step, :]
            i = expit(xt @ self.W["i"] + h @ self.U["i"] + self.b["i"])
            f = expit(xt @ self.W["f"] + h @ self.U["f"] + self.b["f"])
            o = expit(xt @ self.W["o"] + h @ self.U["o"] + self.b["o"])
            g = np.tanh(xt @ self.W["g"] + h @ self.U["g"] + self.b["g"])
            c = f * c + i * g
            ch = np.tanh(c)
            h = o * ch
            I[:, step], F[:, step], O[:, step], G[:, step] = i, f, o, g
            C[:, step], CH[:, step], H[:, step] = c, ch, h
        self._cache = (x, I, F, O, G, C, CH, H, return_sequences)
        return H if return_sequences else H[:, -1, :]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, I, F, O, G, C, CH, H, return_sequences = self._cache
        n, t, _ = x.shape
        u = self.units
        for gate in _GATES:
            self.grads[f"W{gate}"] = np.zeros_like(self.W[gate])
            self.grads[f"U{gate}"] = np.zeros_like(self.U[gate])
            self.grads[f"b{gate}"] = np.zeros_like(self.b[gate])
        dx = np.zeros_like(x)
        dh_next = np.zeros((n, u))
        dc_next = np.zeros((n, u))
        for step in reversed(range(t)):
            if return_sequences:
                dh = dout[:, step, :] + dh_next
            else:
                dh = (dout if step == t - 1 else 0.0) + dh_next
            i, f, o, g = I[:, step], F[:, step], O[:, step], G[:, step]
            ch = CH[:, step]
            c_prev = C[:, step - 1] if step > 0 else np.zeros((n, u))
            h_prev = H[:, step - 1] if step > 0 else np.zeros((n, u))
            dc = dc_next + dh * o * (1.0 - ch * ch)
            da = {
                "o": dh * ch * o * (1.0 - o),
                "i": dc * g * i * (1.0 - i),
                "g": dc * i * (1.0 - g * g),
                "f": dc * c_prev * f * (1.0 - f),
            }
            dc_next = dc * f
            xt = x[:, step, :]
            dh_next = np.zeros((n, u))
            dxt = np.zeros((n, self.input_size))
            for gate in _GATES:
                grad = da[gate]
                self.grads[f"W{gate}"] += xt.T @ grad
                self.grads[f"U{gate}"] += h_prev.T @ grad
                self.grads[f"b{gate}"] += grad.sum(axis=0)
                dxt += grad @ self.W[gate].T
                dh_next += grad @ self.U[gate].T
            dx[:, step, :] = dxt
        return dx


class DenseLayer:
    def __init__(self, input_size: int, units: int, activation: str, rng: np.random.Generator):
        if activation not in (RELU, SIGMOID):
            raise ConfigError(f"unsupported activation {activation!r}")
        self.input_size = input_size
        self.units = units
        self.activation = activation
        self.W = _glorot(rng, input_size, units, (input_size, units))
        self.b = np.zeros(units)
        self._cache = None
        self.grads: dict[str, np.ndarray] = {}

    def named_parameters(self):
        yield "W", self.W
        yield "b", self.b

    def weight_names(self):
        return ["W"]

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        setattr(self, name, value)

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = x @ self.W + self.b
        if self.activation == RELU:
            y = np.maximum(a, 0.0)
        else:
            y = expit(a)
        self._cache = (x, a, y)
        return y

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, a, y = self._cache
        if self.activation == RELU:
            da = dout * (a > 0.0)
        else:
            da = dout * y * (1.0 - y)
        self.grads["W"] = x.T @ da
        self.grads["b"] = da.sum(axis=0)
        return da @ self.W.T


def apply_dropout(x: np.ndarray, drop_probability: float, rng: np.random.Generator):
    """Inverted dropout: zero entries with probability p, scale the rest by
    1/(1−p) so the expected output equals the input."""
    if not 0.0 <= drop_probability < 1.0:
        raise ValueError("drop probability must be in [0, 1)")
    if drop_probability == 0.0:
        return x, None
    keep = 1.0 - drop_probability
    mask = (rng.random(x.shape) >= drop_probability) / keep
    return x * mask, mask


class Network:
    """Stack of LSTM and dense layers ending in one output unit."""

    def __init__(self, spec: ArchitectureSpec, input_features: int, layers: list):
        self.spec = spec
        self.input_features = input_features
        self.timesteps = spec.timesteps
        self.layers = layers
        lstm_indices = [i for i, l in enumerate(layers) if isinstance(l, LSTMLayer)]
        self._last_lstm = lstm_indices[-1]
        self._dropout_masks: list = [None] * len(layers)

    def named_parameters(self):
        for idx, layer in enumerate(self.layers):
            for name, value in layer.named_parameters():
                yield f"layer{idx}.{name}", value

    def weight_matrices(self):
        for idx, layer in enumerate(self.layers):
            for name in layer.weight_names():
                yield f"layer{idx}.{name}", dict(layer.named_parameters())[name]

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def forward(
        self,
        batch: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        drop_probability: float = 0.0,
    ) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 3:
            raise DataError(f"batch must be samples x timesteps x features, got shape {batch.shape}")
        n, t, f = batch.shape
        if t != self.timesteps:
            raise DataError(f"batch has {t} timesteps, network expects {self.timesteps}")
        if f != self.input_features:
            raise DataError(f"batch has {f} features, network expects {self.input_features}")
        if training and drop_probability > 0.0 and rng is None:
            raise ValueError("training-mode dropout needs an rng")
        x = batch
        self._dropout_masks = [None] * len(self.layers)
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, LSTMLayer):
                x = layer.forward(x, return_sequences=idx != self._last_lstm)
                if training and drop_probability > 0.0:
                    x, mask = apply_dropout(x, drop_probability, rng)
                    self._dropout_masks[idx] = mask
            else:
                x = layer.forward(x)
        return x[:, 0]

    def backward(self, dpred: np.ndarray) -> None:
        grad = np.asarray(dpred, dtype=np.float64)[:, None]
        for idx in reversed(range(len(self.layers))):
            layer = self.layers[idx]
            if isinstance(layer, LSTMLayer) and self._dropout_masks[idx] is not None:
                grad = grad * self._dropout_masks[idx]
            grad = layer.backward(grad)

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.grads = {}


def build(spec: ArchitectureSpec, feature_count: int, rng_seed: int = 0) -> Network:
    """Instantiate the present layers of ``spec``; deterministic per seed."""
    if feature_count < 1:
        raise ConfigError("feature_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    layers = []
    width = feature_count
    for layer_spec in spec.present_layers():
        if layer_spec.kind == RECURRENT:
            layers.append(LSTMLayer(width, layer_spec.units, rng))
        elif layer_spec.kind in (DENSE, OUTPUT):
            layers.append(DenseLayer(width, layer_spec.units, layer_spec.activation, rng))
        width = layer_spec.units
    return Network(spec, feature_count, layers)


def lstm_cell_step(
    W: dict[str, np.ndarray],
    U: dict[str, np.ndarray],
    b: dict[str, np.ndarray],
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
):
    """One LSTM step on a single feature vector; returns (h_t, c_t).

    i/f/o gates use the logistic sigmoid, the candidate uses tanh,
    c = f*c_prev + i*g and h = o*tanh(c).
    """
    i = expit(x_t @ W["i"] + h_prev @ U["i"] + b["i"])
    f = expit(x_t @ W["f"] + h_prev @ U["f"] + b["f"])
    o = expit(x_t @ W["o"] + h_prev @ U["o"] + b["o"])
    g = np.tanh(x_t @ W["g"] + h_prev @ U["g"] + b["g"])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def mse(y: np.ndarray, yhat: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DataError(f"mse needs equal-length vectors, got {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise DataError("mse of empty vectors is undefined")
    return float(np.mean((y - yhat) ** 2))


def rmse(y: np.ndarray, yhat: np.ndarray) -> float:
    return math.sqrt(mse(y, yhat))


def _l2_term(net: Network, l2_lambda: float) -> float:
    if l2_lambda == 0.0:
        return 0.0
    return l2_lambda * sum(float(np.sum(w * w)) for _, w in net.weight_matrices())


def _apply_l2_grads(net: Network, l2_lambda: float) -> None:
    if l2_lambda == 0.0:
        return
    for layer in net.layers:
        params = dict(layer.named_parameters())
        for name in layer.weight_names():
            layer.grads[name] = layer.grads[name] + 2.0 * l2_lambda * params[name]


def _clip_global_norm(net: Network, max_norm: float | None) -> None:
    if max_norm is None:
        return
    total = 0.0
    for layer in net.layers:
        for g in layer.grads.values():
            total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for layer in net.layers:
            for name in layer.grads:
                layer.grads[name] = layer.grads[name] * scale


def _sgd_step(net: Network, lr: float) -> None:
    for layer in net.layers:
        params = dict(layer.named_parameters())
        for name, grad in layer.grads.items():
            layer.set_parameter(name, params[name] - lr * grad)


def train(
    net: Network,
    train_data: FramedDataset,
    config: TrainConfig,
    val_data: FramedDataset | None = None,
) -> tuple[Network, Metrics]:
    """Gradient-descent training; mutates ``net`` in place.

    Per-epoch training loss is the data MSE plus the L2 penalty, computed in
    training mode (dropout active). A non-finite loss raises
    :class:`DivergenceError` with the epoch index.
    """
    if train_data.sample_count == 0:
        raise DataError("training set is empty")
    rng = np.random.default_rng(config.rng_seed)
    drop_p = config.drop_probability()
    n = train_data.sample_count
    batch = n if config.batch_size is None else min(config.batch_size, n)

    train_losses: list[float] = []
    val_losses: list[float] | None = [] if val_data is not None else None
    # overflow in a diverging run is expected and reported via DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            loss_sum = 0.0
            for start in range(0, n, batch):
                xb = train_data.inputs[start : start + batch]
                yb = train_data.targets[start : start + batch]
                preds = net.forward(xb, training=True, rng=rng, drop_probability=drop_p)
                data_loss = mse(yb, preds)
                loss = data_loss + _l2_term(net, config.l2_lambda)
                loss_sum += loss * len(yb)
                net.zero_grads()
                net.backward(2.0 * (preds - yb) / len(yb))
                _apply_l2_grads(net, config.l2_lambda)
                _clip_global_norm(net, config.grad_clip_norm)
                _sgd_step(net, config.learning_rate)
            epoch_loss = loss_sum / n
            if not math.isfinite(epoch_loss):
                raise DivergenceError(epoch)
            train_losses.append(epoch_loss)
            if val_data is not None:
                val_mse, _ = evaluate(net, val_data)
                val_losses.append(val_mse)

    train_mse, _ = evaluate(net, train_data)
    metrics = Metrics(
        train_loss_history=train_losses,
        final_train_rmse=math.sqrt(train_mse),
        val_loss_history=val_losses,
    )
    if val_data is not None:
        val_mse, val_rmse = evaluate(net, val_data)
        metrics.validation_rmse = val_rmse
    return net, metrics


def evaluate(net: Network, data: FramedDataset) -> tuple[float, float]:
    """Inference-mode (MSE, RMSE) on a framed dataset."""
    if data.sample_count == 0:
        raise DataError("cannot evaluate on an empty dataset")
    preds = net.forward(data.inputs, training=False)
    value = mse(data.targets, preds)
    return value, math.sqrt(value)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    max_relative_error: float
    worst_parameter: str
    parameter_count: int


def gradient_check(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    l2_lambda: float = 0.0,
    step: float = 1e-5,
) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    Runs in inference mode (no dropout) so the loss is deterministic.
    Relative error is |analytic − numeric| / max(|analytic|, |numeric|, 1e-4);
    the floor keeps finite-difference noise on near-zero gradients from
    dominating the report.
    """

    def loss_at_current() -> float:
        preds = net.forward(inputs, training=False)
        return mse(targets, preds) + _l2_term(net, l2_lambda)

    preds = net.forward(inputs, training=False)
    net.zero_grads()
    net.backward(2.0 * (preds - targets) / len(targets))
    _apply_l2_grads(net, l2_lambda)
    analytic = {
        f"layer{idx}.{name}": layer.grads[name].copy()
        for idx, layer in enumerate(net.layers)
        for name, _ in layer.named_parameters()
    }

    worst = 0.0
    worst_name = ""
    count = 0
    for idx, layer in enumerate(net.layers):
        for name, param in list(layer.named_parameters()):
            flat = param.reshape(-1)
            grad_flat = analytic[f"layer{idx}.{name}"].reshape(-1)
            for k in range(flat.size):
                original = flat[k]
                flat[k] = original + step
                loss_plus = loss_at_current()
                flat[k] = original - step
                loss_minus = loss_at_current()
                flat[k] = original
                numeric = (loss_plus - loss_minus) / (2.0 * step)
                a = grad_flat[k]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
                count += 1
                if rel > worst:
                    worst = rel
                    worst_name = f"layer{idx}.{name}[{k}]"
    return GradientCheckReport(worst, worst_name, count)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def write_loss_csv(path: str | Path, train_losses: list[float], val_losses: list[float] | None) -> None:
    """CSV with header epoch,train_loss,val_loss (val column empty when absent)."""
    import csv

    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train_loss in enumerate(train_losses, start=1):
            val = "" if val_losses is None else repr(val_losses[epoch - 1])
            writer.writerow([epoch, repr(train_loss), val])


def save_checkpoint(
    net: Network,
    path: str | Path,
    scaler: Scaler | None = None,
    meta: dict | None = None,
) -> None:
    """Write a versioned checkpoint: text header, then parameter blocks as
    row-major little-endian float64 in layer order."""
    blocks = [(name, value) for name, value in net.named_parameters()]
    header = {
        "version": CHECKPOINT_VERSION,
        "architecture": genome.architecture_to_text(net.spec),
        "feature_count": net.input_features,
        "timesteps": net.timesteps,
        "scaler": scaler.to_dict() if scaler is not None else None,
        "meta": meta or {},
        "blocks": [{"name": name, "shape": list(value.shape)} for name, value in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode("ascii"))
        fh.write(f"HEADER {len(header_bytes)}\n".encode("ascii"))
        fh.write(header_bytes)
        for _, value in blocks:
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[Network, Scaler | None, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        magic_end = raw.index(b"\n")
        magic = raw[:magic_end].decode("ascii")
        if not magic.startswith(CHECKPOINT_MAGIC):
            raise CheckpointError(f"{path} is not a checkpoint (bad magic {magic!r})")
        header_line_end = raw.index(b"\n", magic_end + 1)
        header_line = raw[magic_end + 1 : header_line_end].decode("ascii")
        header_len = int(header_line.split()[1])
        header_start = header_line_end + 1
        header = json.loads(raw[header_start : header_start + header_len])
        body = raw[header_start + header_len :]
    except (ValueError, IndexError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    spec = genome.architecture_from_text(header["architecture"], source=str(path))
    net = build(spec, header["feature_count"], rng_seed=0)
    offset = 0
    by_name = {f"layer{idx}.{name}": (layer, name)
               for idx, layer in enumerate(net.layers)
               for name, _ in layer.named_parameters()}
    expected = [f"layer{idx}.{name}" for idx, layer in enumerate(net.layers)
                for name, _ in layer.named_parameters()]
    listed = [b["name"] for b in header["blocks"]]
    if listed != expected:
        raise CheckpointError(f"checkpoint blocks {listed} do not match architecture {expected}")
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        size = int(np.prod(shape)) if shape else 1
        chunk = body[offset : offset + size * 8]
        if len(chunk) != size * 8:
            raise CheckpointError(f"checkpoint {path} truncated at block {block['name']}")
        value = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        layer, name = by_name[block["name"]]
        layer.set_parameter(name, value)
        offset += size * 8
    scaler = Scaler.from_dict(header["scaler"]) if header.get("scaler") else None
    return net, scaler, header.get("meta", {})
