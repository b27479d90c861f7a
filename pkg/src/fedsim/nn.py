"""Dense ReLU network with softmax cross-entropy, operating on flat parameter vectors.

Parameters live in a single float64 array laid out layer by layer as the
row-major ``(fan_in, fan_out)`` weight matrix followed by the ``fan_out``
bias vector. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import blas

from .errors import ConfigError, StructuralError

MNIST_NET = (784, 200, 200, 10)


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...] = MNIST_NET
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError("need at least input and output layers", "layer_sizes")
        if any(s < 1 for s in self.layer_sizes):
            raise ConfigError("layer sizes must be positive", "layer_sizes")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}", "activation")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def layer_slices(self):
        """Yield ``(fan_in, fan_out, weight_slice, bias_slice)`` for each layer."""
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset = w.stop
            b = slice(offset, offset + fan_out)
            offset = b.stop
            yield fan_in, fan_out, w, b


@dataclass
class MiniBatch:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise StructuralError(f"images must be 2-D, got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise StructuralError(
                f"{self.images.shape[0]} images but labels have shape {self.labels.shape}"
            )

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "MiniBatch":
        return MiniBatch(self.images[idx], self.labels[idx])


def unflatten(params: np.ndarray, spec: NetworkSpec):
    """Return ``[(W, b), ...]`` views into ``params`` (no copies)."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise StructuralError(
            f"parameter vector has shape {params.shape}, spec needs ({spec.n_params},)"
        )
    return [
        (params[w].reshape(fan_in, fan_out), params[b])
        for fan_in, fan_out, w, b in spec.layer_slices()
    ]


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.n_params, dtype=np.float64)
    for fan_in, fan_out, w, _ in spec.layer_slices():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[w] = rng.uniform(-limit, limit, size=fan_in * fan_out)
    return params


def _check_batch(spec: NetworkSpec, batch: MiniBatch):
    if batch.images.shape[1] != spec.n_inputs:
        raise StructuralError(
            f"batch has {batch.images.shape[1]} features, network expects {spec.n_inputs}"
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _forward_cached(layers, x):
    acts = [x]
    for W, b in layers[:-1]:
        x = x @ W + b
        np.maximum(x, 0.0, out=x)
        acts.append(x)
    W, b = layers[-1]
    return acts, x @ W + b


def forward(params: np.ndarray, spec: NetworkSpec, batch: MiniBatch) -> np.ndarray:
    """Class probabilities, one softmax row per sample."""
    _check_batch(spec, batch)
    _, logits = _forward_cached(unflatten(params, spec), batch.images)
    return _softmax(logits)


def loss_and_grad(params: np.ndarray, spec: NetworkSpec, batch: MiniBatch):
    """Mean cross-entropy over the batch and its exact gradient w.r.t. ``params``."""
    _check_batch(spec, batch)
    if len(batch) == 0:
        raise StructuralError("empty batch")
    layers = unflatten(params, spec)
    acts, logits = _forward_cached(layers, batch.images)

    n = len(batch)
    rows = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[rows, batch.labels]))

    grad = np.empty_like(params, dtype=np.float64)
    grad_layers = unflatten(grad, spec)
    delta = np.exp(shifted - log_norm[:, None])
    delta[rows, batch.labels] -= 1.0
    delta /= n
    for k in range(len(layers) - 1, -1, -1):
        gW, gb = grad_layers[k]
        np.matmul(acts[k].T, delta, out=gW)
        np.sum(delta, axis=0, out=gb)
        if k:
            delta = delta @ layers[k][0].T
            delta *= acts[k] > 0
    return loss, grad


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    if params.shape != grad.shape:
        raise StructuralError(f"params {params.shape} vs grad {grad.shape}")
    return params - lr * grad


def train_step_(params: np.ndarray, spec: NetworkSpec, batch: MiniBatch, lr: float) -> float:
    """One SGD step on ``batch``, applied to ``params`` in place; returns the pre-step loss.

    Same update as ``sgd_step(params, loss_and_grad(...)[1], lr)`` up to rounding:
    each weight matrix is updated by a single ``dgemm`` with ``beta=1`` instead of
    materialising the full gradient first.
    """
    _check_batch(spec, batch)
    layers = unflatten(params, spec)
    acts, logits = _forward_cached(layers, batch.images)

    n = len(batch)
    rows = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[rows, batch.labels]))

    delta = np.exp(shifted - log_norm[:, None])
    delta[rows, batch.labels] -= 1.0
    delta /= n
    for k in range(len(layers) - 1, -1, -1):
        W, b = layers[k]
        # backprop through the pre-update weights
        prev = delta @ W.T if k else None
        # W is C-contiguous, so W.T is a Fortran view dgemm can overwrite in place
        blas.dgemm(alpha=-lr, a=delta, b=acts[k], trans_a=True, beta=1.0, c=W.T, overwrite_c=True)
        b -= lr * delta.sum(axis=0)
        if k:
            delta = prev * (acts[k] > 0)
    return loss


def evaluate(params: np.ndarray, spec: NetworkSpec, dataset: MiniBatch, chunk: int = 5000) -> float:
    """Top-1 accuracy; ties go to the lowest class index."""
    if len(dataset) == 0:
        raise ConfigError("cannot evaluate on an empty dataset", "dataset")
    _check_batch(spec, dataset)
    layers = unflatten(params, spec)
    correct = 0
    for start in range(0, len(dataset), chunk):
        x = dataset.images[start:start + chunk]
        _, logits = _forward_cached(layers, x)
        pred = np.argmax(_softmax(logits), axis=1)
        correct += int(np.count_nonzero(pred == dataset.labels[start:start + chunk]))
    return correct / len(dataset)
