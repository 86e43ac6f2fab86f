"""Layers with explicit forward/backward passes on NHWC float arrays.

Each layer caches what its backward pass needs during ``forward`` and
fills ``grads`` (same keys as ``params``) during ``backward``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}  # non-trainable, saved with weights

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def config(self) -> dict:
        return {"kind": self.kind}

    def selection(self):
        """Which branch each unit took in the last forward pass (None if smooth)."""
        return None

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items() if k != "kind")
        return f"{type(self).__name__}({args})"


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def _im2col(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    """(n, h+2, w+2, c) padded input -> (n*h*w, 9c) rows ordered (ky, kx, c)."""
    n, _, _, c = xp.shape
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # n, h, w, c, 3, 3
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * h * w, 9 * c)


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded, stride-1 3x3 cross-correlation. ``kernels`` is (3, 3, cin, cout)."""
    if kernels.shape[:2] != (3, 3):
        raise ValueError(f"expected 3x3 kernels, got {kernels.shape[:2]}")
    if x.ndim != 4 or x.shape[3] != kernels.shape[2]:
        raise ValueError(f"input {x.shape} does not match kernels {kernels.shape}")
    n, h, w, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    y = _im2col(xp, h, w) @ kernels.reshape(-1, kernels.shape[3]) + bias
    return y.reshape(n, h, w, -1)


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, in_channels: int, filters: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.in_channels, self.filters = in_channels, filters
        rng = rng or np.random.default_rng(0)
        self.params["W"] = he_normal(rng, (3, 3, in_channels, filters), 9 * in_channels)
        self.params["b"] = np.zeros(filters)

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(f"conv expects (n, h, w, {self.in_channels}), got {x.shape}")
        n, h, w, _ = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = _im2col(xp, h, w)
        self._cache = (cols, x.shape)
        W = self.params["W"].reshape(-1, self.filters)
        return (cols @ W + self.params["b"]).reshape(n, h, w, self.filters)

    def backward(self, dy):
        cols, (n, h, w, c) = self._cache
        dy2 = dy.reshape(-1, self.filters)
        self.grads["W"] = (cols.T @ dy2).reshape(self.params["W"].shape)
        self.grads["b"] = dy2.sum(axis=0)
        dcols = (dy2 @ self.params["W"].reshape(-1, self.filters).T).reshape(n, h, w, 3, 3, c)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dy.dtype)
        for ky in range(3):
            for kx in range(3):
                dxp[:, ky:ky + h, kx:kx + w] += dcols[:, :, :, ky, kx]
        return dxp[:, 1:-1, 1:-1]

    def output_shape(self, shape):
        return shape[:-1] + (self.filters,)

    def config(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "filters": self.filters}


class BatchNorm(Layer):
    """Per-channel normalisation over every axis but the last."""

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.state["mean"] = np.zeros(channels)
        self.state["var"] = np.ones(channels)

    def forward(self, x, training=False):
        if x.shape[-1] != self.channels:
            raise ValueError(f"batchnorm expects {self.channels} channels, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if training:
            if x.shape[0] < 2:
                raise ValueError("batchnorm needs a batch of at least 2 in training mode")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.state["mean"] = m * self.state["mean"] + (1 - m) * mean
            self.state["var"] = m * self.state["var"] + (1 - m) * var
        else:
            mean, var = self.state["mean"], self.state["var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, inv, training = self._cache
        axes = tuple(range(dy.ndim - 1))
        self.grads["gamma"] = (dy * xhat).sum(axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        g = self.params["gamma"] * inv
        if not training:
            return dy * g
        return g * (dy - dy.mean(axis=axes) - xhat * (dy * xhat).mean(axis=axes))

    def config(self):
        return {"kind": self.kind, "channels": self.channels, "momentum": self.momentum,
                "eps": self.eps}


class MaxPool(Layer):
    """2x2 stride-2 max; odd trailing rows/columns are dropped (61 -> 30)."""

    kind = "maxpool"

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        if h < 2 or w < 2:
            raise ValueError(f"maxpool needs h, w >= 2, got {h}x{w}")
        h2, w2 = h // 2, w // 2
        blocks = x[:, :2 * h2, :2 * w2].reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(n, h2, w2, c, 4)
        arg = blocks.argmax(axis=-1)
        self._cache = (arg, x.shape)
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        arg, (n, h, w, c) = self._cache
        h2, w2 = h // 2, w // 2
        blocks = np.zeros((n, h2, w2, c, 4), dtype=dy.dtype)
        np.put_along_axis(blocks, arg[..., None], dy[..., None], axis=-1)
        dx = np.zeros((n, h, w, c), dtype=dy.dtype)
        dx[:, :2 * h2, :2 * w2] = blocks.reshape(n, h2, w2, c, 2, 2).transpose(
            0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
        return dx

    def output_shape(self, shape):
        return (shape[0] // 2, shape[1] // 2, shape[2])

    def selection(self):
        return self._cache[0]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)

    def selection(self):
        return self._mask


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False):
        # split by sign so exp never overflows
        e = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        self._y = y
        return y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, units: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.in_features, self.units = in_features, units
        rng = rng or np.random.default_rng(0)
        self.params["W"] = he_normal(rng, (in_features, units), in_features)
        self.params["b"] = np.zeros(units)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"dense expects (n, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T

    def output_shape(self, shape):
        return (self.units,)

    def config(self):
        return {"kind": self.kind, "in_features": self.in_features, "units": self.units}


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return Sigmoid().forward(np.asarray(x, dtype=float))
