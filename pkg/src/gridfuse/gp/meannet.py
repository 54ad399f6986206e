"""Small ReLU MLP used as the shared GP mean function, with manual backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridfuse.errors import InvalidArgument


@dataclass(frozen=True)
class MeanNet:
    """Feed-forward net ``d_in -> h1 -> h2 -> 1``; ReLU on hidden layers.

    ``weights[l]`` has shape ``(dims[l], dims[l+1])`` so a batch is ``X @ W + b``.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgument("weights and biases must be non-empty and paired")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidArgument(f"layer {l}: weight {w.shape} vs bias {b.shape}")
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise InvalidArgument(f"layer {l}: input dim {w.shape[0]} does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidArgument(f"layer {l}: non-finite parameters")
        if self.weights[-1].shape[1] != 1:
            raise InvalidArgument("output layer must have width 1")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def init(cls, layer_dims, seed: int) -> "MeanNet":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(tuple(ws), tuple(bs))

    @classmethod
    def constant(cls, layer_dims, value: float) -> "MeanNet":
        ws = tuple(np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:]))
        bs = [np.zeros(b) for b in layer_dims[1:]]
        bs[-1][:] = value
        return cls(ws, tuple(bs))

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, vec) -> "MeanNet":
        vec = np.asarray(vec, dtype=float)
        ws, bs, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[k:k + w.size].reshape(w.shape))
            k += w.size
            bs.append(vec[k:k + b.size].copy())
            k += b.size
        if k != vec.size:
            raise InvalidArgument(f"expected {k} parameters, got {vec.size}")
        return MeanNet(tuple(ws), tuple(bs))

    def _check(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.layer_dims[0] == 1 else x[None, :]
        if x.ndim != 2 or x.shape[1] != self.layer_dims[0]:
            raise InvalidArgument(
                f"mean net expects input dimension {self.layer_dims[0]}, got shape {x.shape}"
            )
        return x

    def forward(self, inputs) -> np.ndarray:
        h = self._check(inputs)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def backward(self, inputs, grad_out) -> np.ndarray:
        """Flat gradient of ``sum(grad_out * forward(inputs))`` w.r.t. parameters."""
        x = self._check(inputs)
        acts = [x]
        pre = []
        last = len(self.weights) - 1
        h = x
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if l < last else z
            acts.append(h)
        delta = np.asarray(grad_out, dtype=float).reshape(-1, 1)
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for l in range(last, -1, -1):
            if l < last:
                delta = delta * (pre[l] > 0)
            gw[l] = acts[l].T @ delta
            gb[l] = delta.sum(axis=0)
            if l:
                delta = delta @ self.weights[l].T
        parts = []
        for w, b in zip(gw, gb):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)


def mean_forward(net: MeanNet, inputs) -> np.ndarray:
    return net.forward(inputs)
