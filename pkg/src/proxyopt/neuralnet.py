"""A small from-scratch ReLU MLP regressor trained with Adam on MSE.

All parameters of a model live in one contiguous float64 vector
(``model.params``); ``model.weights`` and ``model.biases`` are views into
it, layer by layer, weight before bias. Gradients use the same flat layout,
so the optimizer works on single vectors.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from proxyopt.errors import (
    InvalidArchitectureError,
    InvalidInputError,
    InvalidParameterError,
    ModelFormatError,
    ShapeError,
    TrainingDivergedError,
)

log = logging.getLogger(__name__)

FORMAT_MAGIC = "proxyopt-mlp"
FORMAT_VERSION = 1


@dataclass
class NormalizationSpec:
    """Affine maps between domain units and network units."""

    input_center: np.ndarray
    input_halfrange: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0

    def __post_init__(self):
        self.input_center = np.asarray(self.input_center, dtype=float)
        self.input_halfrange = np.asarray(self.input_halfrange, dtype=float)
        if np.any(self.input_halfrange <= 0) or not self.target_std > 0:
            raise InvalidParameterError("normalization scales must be positive")

    @classmethod
    def identity(cls, dim: int) -> "NormalizationSpec":
        return cls(np.zeros(dim), np.ones(dim), 0.0, 1.0)

    @classmethod
    def fit(cls, lower, upper, targets) -> "NormalizationSpec":
        """Inputs: box ``[lower, upper]`` onto ``[-1, 1]``. Targets: standardized."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        targets = np.asarray(targets, dtype=float)
        std = float(targets.std())
        return cls((upper + lower) / 2.0, (upper - lower) / 2.0, float(targets.mean()), std if std > 0 else 1.0)

    def normalize_inputs(self, x):
        return (np.asarray(x, dtype=float) - self.input_center) / self.input_halfrange

    def normalize_targets(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def denormalize_targets(self, y):
        return np.asarray(y, dtype=float) * self.target_std + self.target_mean


class MlpModel:
    """Fully connected network ``layer_sizes = [d, h1, ..., hL, 1]``.

    Hidden layers use ReLU, the output is linear. Weight ``l`` has shape
    ``(layer_sizes[l+1], layer_sizes[l])``.
    """

    def __init__(self, layer_sizes, params=None, norm: NormalizationSpec | None = None):
        sizes = tuple(int(s) for s in layer_sizes)
        _check_architecture(sizes)
        self.layer_sizes = sizes
        n = parameter_count(sizes)
        if params is None:
            params = np.zeros(n)
        params = np.array(params, dtype=float)
        if params.shape != (n,):
            raise ShapeError(f"architecture {list(sizes)} needs {n} parameters, got {params.shape}")
        self.params = params
        self.weights, self.biases = _layer_views(self.params, sizes)
        self.norm = norm if norm is not None else NormalizationSpec.identity(sizes[0])

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "MlpModel":
        norm = NormalizationSpec(
            self.norm.input_center.copy(),
            self.norm.input_halfrange.copy(),
            self.norm.target_mean,
            self.norm.target_std,
        )
        return MlpModel(self.layer_sizes, self.params.copy(), norm)

    def unflatten(self, flat):
        """Split a flat parameter-shaped vector into (weights, biases) views."""
        flat = np.asarray(flat)
        if flat.shape != self.params.shape:
            raise ShapeError(f"expected shape {self.params.shape}, got {flat.shape}")
        return _layer_views(flat, self.layer_sizes)

    def predict_normalized(self, xn: np.ndarray) -> np.ndarray:
        a = xn
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T
            z += b
            if i < last:
                np.maximum(z, 0.0, out=z)
            a = z
        return a[:, 0]

    def predict(self, x) -> np.ndarray:
        """Denormalized predictions for a batch of domain points ``(n, d)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"expected an (n, {self.input_dim}) batch, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("non-finite network input")
        return self.norm.denormalize_targets(self.predict_normalized(self.norm.normalize_inputs(x)))

    def checksum(self) -> str:
        return hashlib.sha256(dumps_model(self).encode()).hexdigest()


def parameter_count(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def _check_architecture(sizes):
    if len(sizes) < 3:
        raise InvalidArchitectureError(f"need at least one hidden layer, got {list(sizes)}")
    if any(s < 1 for s in sizes):
        raise InvalidArchitectureError(f"zero-width layer in {list(sizes)}")
    if sizes[-1] != 1:
        raise InvalidArchitectureError(f"output width must be 1, got {sizes[-1]}")


def _layer_views(flat, sizes):
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in))
        offset += fan_in * fan_out
        biases.append(flat[offset : offset + fan_out])
        offset += fan_out
    return weights, biases


def build_mlp(layer_sizes, seed: int = 0, norm: NormalizationSpec | None = None) -> MlpModel:
    """He-initialized weights (N(0, 2/fan_in)), zero biases."""
    model = MlpModel(layer_sizes, norm=norm)
    rng = np.random.default_rng(seed)
    for w in model.weights:
        w[...] = rng.normal(0.0, math.sqrt(2.0 / w.shape[1]), size=w.shape)
    return model


def forward(model: MlpModel, x) -> float:
    """Prediction at a single domain point, in target units."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise ShapeError(f"expected a point of shape ({model.input_dim},), got {x.shape}")
    return float(model.predict(x[None, :])[0])


def _backprop(model: MlpModel, xn: np.ndarray, yn: np.ndarray, grad_views) -> float:
    """MSE on normalized data; writes d(loss)/d(params) through ``grad_views``.

    ``grad_views`` is ``(weight_views, bias_views)`` of a flat gradient buffer.
    """
    gw, gb = grad_views
    weights, biases = model.weights, model.biases
    last = len(weights) - 1
    acts = [xn]
    a = xn
    for i in range(last):
        z = a @ weights[i].T
        z += biases[i]
        np.maximum(z, 0.0, out=z)
        acts.append(z)
        a = z
    out = a @ weights[last].T
    out += biases[last]
    resid = out[:, 0] - yn
    n = yn.shape[0]
    loss = float(resid @ resid) / n
    delta = (2.0 / n) * resid[:, None]
    ones = np.ones(n)
    for i in range(last, -1, -1):
        np.matmul(delta.T, acts[i], out=gw[i])
        # column sums; matmul is markedly faster than np.sum at these sizes
        np.matmul(ones, delta, out=gb[i])
        if i:
            upstream = delta @ weights[i]
            upstream *= acts[i] > 0.0
            delta = upstream
    return loss


def loss_and_gradients(model: MlpModel, inputs, targets):
    """Batch MSE in normalized target units and its flat gradient.

    ``inputs`` are domain points ``(n, d)``, ``targets`` function values.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise ShapeError(f"expected an (n, {model.input_dim}) batch, got shape {inputs.shape}")
    if targets.shape != (inputs.shape[0],):
        raise ShapeError(f"targets shape {targets.shape} does not match {inputs.shape[0]} inputs")
    if inputs.shape[0] == 0:
        raise ShapeError("empty batch")
    grad = np.empty_like(model.params)
    xn = model.norm.normalize_inputs(inputs)
    loss = _backprop(model, xn, model.norm.normalize_targets(targets), model.unflatten(grad))
    return loss, grad


def dataset_loss(model: MlpModel, inputs, targets) -> float:
    """Full-set MSE in normalized target units (no gradients)."""
    pred = model.predict_normalized(model.norm.normalize_inputs(inputs))
    resid = pred - model.norm.normalize_targets(targets)
    return float(np.mean(resid * resid))


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    _scratch: np.ndarray = field(default=None, repr=False)

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate: float = 1e-3, **kwargs) -> "AdamState":
        return cls(np.zeros_like(model.params), np.zeros_like(model.params), 0, learning_rate, **kwargs)

    def _apply(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self._scratch is None or self._scratch.shape != params.shape:
            self._scratch = np.empty_like(params)
        tmp = self._scratch
        self.step_count += 1
        t = self.step_count
        m, v = self.first_moment, self.second_moment
        m *= self.beta1
        np.multiply(grad, 1.0 - self.beta1, out=tmp)
        m += tmp
        v *= self.beta2
        np.multiply(grad, grad, out=tmp)
        tmp *= 1.0 - self.beta2
        v += tmp
        # tmp <- lr * m_hat / (sqrt(v_hat) + eps)
        np.divide(v, 1.0 - self.beta2**t, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += self.epsilon
        np.divide(m, tmp, out=tmp)
        tmp *= self.learning_rate / (1.0 - self.beta1**t)
        params -= tmp


def adam_step(model: MlpModel, gradients, state: AdamState) -> None:
    """One bias-corrected Adam update of ``model.params``, in place."""
    gradients = np.asarray(gradients, dtype=float)
    if gradients.shape != model.params.shape or state.first_moment.shape != model.params.shape:
        raise ShapeError("gradient/optimizer state shapes do not match the model")
    if not np.all(np.isfinite(gradients)):
        raise TrainingDivergedError("non-finite gradient")
    state._apply(model.params, gradients)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParameterError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be positive")


def heldout_mse(model: MlpModel, spec, n: int, seed: int) -> float:
    """MSE (normalized units) on ``n`` fresh uniform points of ``spec``'s box."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(spec.lower, spec.upper, size=(max(int(n), 1), spec.dim))
    return dataset_loss(model, x, spec(x))


def train(model: MlpModel, samples, config: TrainConfig):
    """Fit a copy of ``model`` to ``samples``; returns ``(model, loss_history)``.

    The normalization is refit from the sample set's domain and targets
    before the first step. ``loss_history[e]`` is the mean per-sample
    training loss seen during epoch ``e``.
    """
    inputs, targets = samples.inputs, samples.targets
    n = inputs.shape[0]
    if n == 0:
        raise ShapeError("empty sample set")
    if inputs.shape[1] != model.input_dim:
        raise ShapeError(f"model takes {model.input_dim}D inputs, samples are {inputs.shape[1]}D")

    model = model.copy()
    model.norm = NormalizationSpec.fit(samples.spec.lower, samples.spec.upper, targets)
    xn = model.norm.normalize_inputs(inputs)
    yn = model.norm.normalize_targets(targets)
    state = AdamState.for_model(model, config.learning_rate)
    grad = np.empty_like(model.params)
    grad_views = model.unflatten(grad)
    rng = np.random.default_rng(config.seed)
    bs = config.batch_size
    history = []
    for epoch in range(config.epochs):
        if config.shuffle:
            order = rng.permutation(n)
            xe, ye = xn[order], yn[order]
        else:
            xe, ye = xn, yn
        total = 0.0
        for start in range(0, n, bs):
            yb = ye[start : start + bs]
            batch_loss = _backprop(model, xe[start : start + bs], yb, grad_views)
            if not math.isfinite(batch_loss):
                raise TrainingDivergedError(f"loss became non-finite in epoch {epoch}", epoch=epoch)
            total += batch_loss * yb.shape[0]
            state._apply(model.params, grad)
        if not np.all(np.isfinite(model.params)):
            raise TrainingDivergedError(f"parameters became non-finite in epoch {epoch}", epoch=epoch)
        history.append(total / n)
        log.debug("epoch %d loss %.6g", epoch, history[-1])
    log.info(
        "trained %s on %d samples: final loss %.4g, held-out mse %.4g",
        list(model.layer_sizes),
        n,
        history[-1],
        heldout_mse(model, samples.spec, max(n // 10, 1), config.seed),
    )
    return model, np.array(history)


# -- serialization ---------------------------------------------------------


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dumps_model(model: MlpModel) -> str:
    lines = [
        f"{FORMAT_MAGIC} {FORMAT_VERSION}",
        "layer_sizes " + " ".join(str(s) for s in model.layer_sizes),
        "activation relu",
        "input_center " + _fmt(model.norm.input_center),
        "input_halfrange " + _fmt(model.norm.input_halfrange),
        "target_mean " + _fmt([model.norm.target_mean]),
        "target_std " + _fmt([model.norm.target_std]),
    ]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"weight {i} {w.shape[0]} {w.shape[1]}")
        lines.extend(_fmt(row) for row in w)
        lines.append(f"bias {i} {b.shape[0]}")
        lines.append(_fmt(b))
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> MlpModel:
    lines = text.splitlines()
    pos = 0

    def take(key):
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError(f"line {pos + 1}: unexpected end of file, wanted {key!r}")
        parts = lines[pos].split()
        if not parts or parts[0] != key:
            raise ModelFormatError(f"line {pos + 1}: expected {key!r}")
        pos += 1
        return parts[1:]

    def floats(fields, count):
        try:
            values = [float(v) for v in fields]
        except ValueError:
            raise ModelFormatError(f"line {pos}: non-numeric value") from None
        if len(values) != count:
            raise ModelFormatError(f"line {pos}: expected {count} values, got {len(values)}")
        return values

    version = take(FORMAT_MAGIC)
    if version != [str(FORMAT_VERSION)]:
        raise ModelFormatError(f"unsupported model format version {version}")
    try:
        sizes = [int(s) for s in take("layer_sizes")]
    except ValueError:
        raise ModelFormatError("line 2: bad layer_sizes") from None
    if take("activation") != ["relu"]:
        raise ModelFormatError("line 3: only relu activation is supported")
    d = sizes[0]
    center = floats(take("input_center"), d)
    halfrange = floats(take("input_halfrange"), d)
    mean = floats(take("target_mean"), 1)[0]
    std = floats(take("target_std"), 1)[0]
    model = MlpModel(sizes, norm=NormalizationSpec(center, halfrange, mean, std))
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        if take("weight") != [str(i), str(w.shape[0]), str(w.shape[1])]:
            raise ModelFormatError(f"line {pos}: weight header does not match layer {i}")
        for r in range(w.shape[0]):
            pos += 1
            if pos > len(lines):
                raise ModelFormatError("unexpected end of file in weight block")
            w[r] = floats(lines[pos - 1].split(), w.shape[1])
        if take("bias") != [str(i), str(b.shape[0])]:
            raise ModelFormatError(f"line {pos}: bias header does not match layer {i}")
        pos += 1
        if pos > len(lines):
            raise ModelFormatError("unexpected end of file in bias block")
        b[:] = floats(lines[pos - 1].split(), b.shape[0])
    take("end")
    return model


def save_model(model: MlpModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> MlpModel:
    return loads_model(Path(path).read_text())
