"""Small classifiers on a flat parameter vector.

Two reference models share one layout convention: a stack of dense layers,
each stored as its weight matrix (fan_in x fan_out, row-major) followed by
its bias. ``logreg`` is a single layer (multinomial logistic regression);
``mlp`` adds one tanh hidden layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ModelLayout:
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.shapes:
            raise ValueError("layout needs at least one layer")

    @property
    def sizes(self) -> list[int]:
        return [i * o + o for i, o in self.shapes]

    @property
    def total_params(self) -> int:
        return sum(self.sizes)

    @property
    def last_layer_start(self) -> int:
        """Index of the first parameter of the final dense layer (weights, then bias)."""
        return self.total_params - self.sizes[-1]

    @property
    def num_inputs(self) -> int:
        return self.shapes[0][0]

    @property
    def num_classes(self) -> int:
        return self.shapes[-1][1]

    def unpack(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        layers, pos = [], 0
        for i, o in self.shapes:
            w = flat[pos:pos + i * o].reshape(i, o)
            pos += i * o
            layers.append((w, flat[pos:pos + o]))
            pos += o
        return layers


def logreg_layout(d: int, num_classes: int) -> ModelLayout:
    return ModelLayout(((d, num_classes),))


def mlp_layout(d: int, num_classes: int, hidden: int = 32) -> ModelLayout:
    return ModelLayout(((d, hidden), (hidden, num_classes)))


def make_layout(kind: str, d: int, num_classes: int, hidden: int = 32) -> ModelLayout:
    if kind == "logreg":
        return logreg_layout(d, num_classes)
    if kind == "mlp":
        return mlp_layout(d, num_classes, hidden)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class ModelParams:
    flat: np.ndarray
    layout: ModelLayout

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.layout.total_params,):
            raise ValueError(
                f"expected {self.layout.total_params} parameters, got {self.flat.shape}"
            )

    def copy(self) -> "ModelParams":
        return ModelParams(self.flat.copy(), self.layout)


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (samples, d) with one label per row")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, idx) -> "Batch":
        idx = np.asarray(idx, dtype=int)
        return Batch(self.features[idx], self.labels[idx])

    @staticmethod
    def concat(batches) -> "Batch":
        batches = list(batches)
        return Batch(
            np.concatenate([b.features for b in batches]),
            np.concatenate([b.labels for b in batches]),
        )


def init_params(layout: ModelLayout, rng: np.random.Generator | None = None) -> ModelParams:
    """Zeros for a single layer; Glorot-uniform weights otherwise (biases zero)."""
    flat = np.zeros(layout.total_params)
    if len(layout.shapes) > 1:
        if rng is None:
            raise ValueError("multi-layer init needs an rng")
        for w, _ in layout.unpack(flat):
            limit = np.sqrt(6.0 / sum(w.shape))
            w[...] = rng.uniform(-limit, limit, size=w.shape)
    return ModelParams(flat, layout)


def _check(params: ModelParams, batch: Batch) -> None:
    if batch.features.shape[1] != params.layout.num_inputs:
        raise ValueError(
            f"batch has {batch.features.shape[1]} features, model expects {params.layout.num_inputs}"
        )
    if len(batch) and (batch.labels.min() < 0 or batch.labels.max() >= params.layout.num_classes):
        raise ValueError("label outside [0, num_classes)")


def _forward(params: ModelParams, x: np.ndarray):
    acts = [x]
    layers = params.layout.unpack(params.flat)
    h = x
    for j, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.tanh(z) if j < len(layers) - 1 else z
        acts.append(h)
    return layers, acts


def logits(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return _forward(params, np.asarray(features, dtype=np.float64))[1][-1]


def predict_proba(params: ModelParams, features: np.ndarray) -> np.ndarray:
    z = logits(params, features)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(params: ModelParams, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. ``params.flat``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    _check(params, batch)
    layers, acts = _forward(params, batch.features)
    z = acts[-1]
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = len(batch)
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, batch.labels]))

    delta = np.exp(z - logsum[:, None])
    delta[rows, batch.labels] -= 1.0
    delta /= n
    grads = []
    for j in range(len(layers) - 1, -1, -1):
        w, _ = layers[j]
        grads.append((acts[j].T @ delta, delta.sum(axis=0)))
        if j:
            delta = (delta @ w.T) * (1.0 - acts[j] ** 2)
    grads.reverse()
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    return loss, flat


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    # argmax picks the lowest index among ties
    return np.argmax(logits(params, features), axis=1)


def evaluate(params: ModelParams, data: Batch) -> float:
    if len(data) == 0:
        raise ValueError("cannot evaluate on empty data")
    _check(params, data)
    return float(np.mean(predict(params, data.features) == data.labels))


def slice_last_layer(delta: np.ndarray, layout: ModelLayout) -> np.ndarray:
    delta = np.asarray(delta)
    if delta.shape != (layout.total_params,):
        raise ValueError("delta length does not match layout")
    return delta[layout.last_layer_start:]
