"""One-hidden-layer ReLU perceptron over flat parameter vectors.

Parameters live in a single 1-D array so that aggregation is plain vector
arithmetic. The batched helpers take a stack of parameter vectors, one row
per device, and evaluate all devices in one pass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError, NumericalError


@dataclass(frozen=True)
class MLPShape:
    input_dim: int
    hidden: int
    classes: int

    def __post_init__(self):
        if min(self.input_dim, self.hidden, self.classes) < 1:
            raise InvalidArgumentError("layer sizes must be >= 1")

    @property
    def size(self) -> int:
        d, h, c = self.input_dim, self.hidden, self.classes
        return d * h + h + h * c + c

    def unpack(self, params: np.ndarray):
        """Views (W1, b1, W2, b2); leading batch axes are preserved."""
        d, h, c = self.input_dim, self.hidden, self.classes
        lead = params.shape[:-1]
        if params.shape[-1] != self.size:
            raise InvalidArgumentError(f"expected {self.size} parameters, got {params.shape[-1]}")
        o1 = d * h
        o2 = o1 + h
        o3 = o2 + h * c
        return (params[..., :o1].reshape(*lead, d, h), params[..., o1:o2],
                params[..., o2:o3].reshape(*lead, h, c), params[..., o3:])

    def init(self, rng: np.random.Generator) -> np.ndarray:
        # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
        d, h, c = self.input_dim, self.hidden, self.classes
        a1, a2 = 1 / np.sqrt(d), 1 / np.sqrt(h)
        return np.concatenate([
            rng.uniform(-a1, a1, d * h), rng.uniform(-a1, a1, h),
            rng.uniform(-a2, a2, h * c), rng.uniform(-a2, a2, c),
        ])


def logits(shape: MLPShape, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    W1, b1, W2, b2 = shape.unpack(params)
    return np.maximum(X @ W1 + b1, 0.0) @ W2 + b2


def predict(shape: MLPShape, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.argmax(logits(shape, params, X), axis=-1)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def loss_and_grad(shape: MLPShape, params: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient (flat)."""
    loss, grad = batched_loss_and_grad(shape, params[None], X[None], y[None])
    return float(loss[0]), grad[0]


def batched_loss_and_grad(shape: MLPShape, params: np.ndarray, X: np.ndarray, y: np.ndarray):
    """params (K, P), X (K, B, d), y (K, B) -> losses (K,), grads (K, P)."""
    W1, b1, W2, b2 = shape.unpack(params)
    K, B = y.shape
    pre = X @ W1 + b1[:, None, :]
    act = np.maximum(pre, 0.0)
    z = act @ W2 + b2[:, None, :]
    logp = _log_softmax(z)
    kk, bb = np.meshgrid(np.arange(K), np.arange(B), indexing="ij")
    losses = -logp[kk, bb, y].mean(axis=1)
    if not np.all(np.isfinite(losses)):
        raise NumericalError("non-finite training loss")
    dz = np.exp(logp)
    dz[kk, bb, y] -= 1.0
    dz /= B
    gW2 = act.transpose(0, 2, 1) @ dz
    gb2 = dz.sum(axis=1)
    dact = (dz @ W2.transpose(0, 2, 1)) * (pre > 0)
    gW1 = X.transpose(0, 2, 1) @ dact
    gb1 = dact.sum(axis=1)
    grads = np.concatenate([gW1.reshape(K, -1), gb1, gW2.reshape(K, -1), gb2], axis=1)
    return losses, grads


def accuracy(shape: MLPShape, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        raise InvalidArgumentError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(shape, params, X) == y))
