"""Full-precision reference networks.

These exist only to manufacture initial quantized solutions. Hidden units use
relu clipped at 1, so a trained float network already lives in the [-1, 1]
activation range the quantized forward pass assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..qnet import CONV2D, DENSE, RELU, Dataset, LayerSpec, layer_offsets, validate_topology


class TrainingFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class FloatNetwork:
    layers: tuple[LayerSpec, ...]
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        validate_topology(self.layers)
        w = np.array(self.weights, dtype=np.float64)
        total = layer_offsets(self.layers)[-1]
        if w.shape != (total,):
            raise ValueError(f"expected {total} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("float network weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def layer_params(self, l: int) -> tuple[np.ndarray, np.ndarray]:
        offs = layer_offsets(self.layers)
        seg = self.weights[offs[l]:offs[l + 1]]
        layer = self.layers[l]
        return seg[: layer.n_weights].reshape(layer.weight_shape), seg[layer.n_weights:]

    def __eq__(self, other):
        if not isinstance(other, FloatNetwork):
            return NotImplemented
        return self.layers == other.layers and np.array_equal(self.weights, other.weights)

    __hash__ = None


def init_float_network(layers: Sequence[LayerSpec], seed: int) -> FloatNetwork:
    """He-uniform weights, zero biases."""
    layers = tuple(layers)
    validate_topology(layers)
    rng = np.random.default_rng(seed)
    parts = []
    for layer in layers:
        fan_in = layer.in_features * (layer.kernel ** 2 if layer.kind == CONV2D else 1)
        bound = np.sqrt(6.0 / fan_in)
        parts.append(rng.uniform(-bound, bound, size=layer.n_weights))
        parts.append(np.zeros(layer.out_features))
    return FloatNetwork(layers, np.concatenate(parts))


def _conv(x, w, b):
    # x (B, C, H, W), w (O, C, K, K)
    k = w.shape[-1]
    pad = k // 2
    h, wd = x.shape[2], x.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((x.shape[0], w.shape[0], h, wd))
    for dy in range(k):
        for dx in range(k):
            out += np.einsum("bchw,oc->bohw", xp[:, :, dy:dy + h, dx:dx + wd], w[:, :, dy, dx])
    return out + b[None, :, None, None]


def _conv_backward(x, w, grad):
    k = w.shape[-1]
    pad = k // 2
    h, wd = x.shape[2], x.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for dy in range(k):
        for dx in range(k):
            patch = xp[:, :, dy:dy + h, dx:dx + wd]
            dw[:, :, dy, dx] = np.einsum("bohw,bchw->oc", grad, patch)
            dxp[:, :, dy:dy + h, dx:dx + wd] += np.einsum("bohw,oc->bchw", grad, w[:, :, dy, dx])
    return dxp[:, :, pad:pad + h, pad:pad + wd], dw, grad.sum(axis=(0, 2, 3))


def _forward(layers, params, x):
    """Returns logits and the per-layer caches needed for backprop."""
    caches = []
    for layer, (w, b) in zip(layers, params):
        if layer.kind == DENSE:
            x_in = x.reshape(x.shape[0], -1)
            z = x_in @ w + b
        else:
            x_in = x.reshape(x.shape[0], layer.in_features, layer.height, layer.width)
            z = _conv(x_in, w, b)
        if layer.activation == RELU:
            a = np.clip(z, 0.0, 1.0)
        else:
            a = z
        caches.append((x_in, z))
        x = a
    return x.reshape(x.shape[0], -1), caches


def float_logits(fnet: FloatNetwork, batch) -> np.ndarray:
    params = [fnet.layer_params(l) for l in range(len(fnet.layers))]
    return _forward(fnet.layers, params, np.asarray(batch, dtype=np.float64))[0]


def float_accuracy(fnet: FloatNetwork, data: Dataset) -> float:
    pred = np.argmax(float_logits(fnet, data.inputs), axis=1)
    return float(np.mean(pred == data.labels))


def _loss_and_grads(layers, params, x, y):
    logits, caches = _forward(layers, params, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    loss = -np.mean(np.log(p[np.arange(y.size), y] + 1e-300))
    grad = p
    grad[np.arange(y.size), y] -= 1.0
    grad /= y.size
    grads = [None] * len(layers)
    for l in range(len(layers) - 1, -1, -1):
        layer = layers[l]
        x_in, z = caches[l]
        w, _ = params[l]
        if layer.activation == RELU:
            grad = grad.reshape(z.shape) * ((z > 0) & (z < 1))
        else:
            grad = grad.reshape(z.shape)
        if layer.kind == DENSE:
            grads[l] = (x_in.T @ grad, grad.sum(axis=0))
            grad = grad @ w.T
        else:
            grad, dw, db = _conv_backward(x_in, w, grad)
            grads[l] = (dw, db)
    return loss, grads


def train_float_reference(layers, data: Dataset, epochs: int = 500, lr: float = 0.1,
                          seed: int = 0, batch_size: int = 32) -> FloatNetwork:
    """Minibatch SGD on softmax cross-entropy.

    Deterministic for a fixed seed; ``epochs=0`` returns the seeded
    initialization.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    layers = tuple(layers)
    if data.n_features != layers[0].input_size:
        raise ValueError(f"dataset has {data.n_features} features, network expects {layers[0].input_size}")
    if data.labels.max() >= layers[-1].output_size:
        raise ValueError("label exceeds the network's class count")
    fnet = init_float_network(layers, seed)
    params = [tuple(a.copy() for a in fnet.layer_params(l)) for l in range(len(layers))]
    rng = np.random.default_rng([seed, 1])
    n = len(data)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = _loss_and_grads(layers, params, data.inputs[idx], data.labels[idx])
            if not np.isfinite(loss):
                raise TrainingFailed(f"non-finite loss at epoch {epoch}")
            for (w, b), (dw, db) in zip(params, grads):
                w -= lr * dw
                b -= lr * db
    flat = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in params])
    if not np.all(np.isfinite(flat)):
        raise TrainingFailed("weights diverged")
    return FloatNetwork(layers, flat)
