"""Sequential networks, input scaling and weight files."""

from __future__ import annotations

import numpy as np

from ..core import read_tensors, write_tensors
from .layers import BatchNorm, Conv2D, Dense, Flatten, Layer, MaxPool, ReLU, Sigmoid

PROFILES = {"full": (64, 128, 256), "downscaled": (16, 32, 64)}
HEADS = {"detection": "sigmoid", "size": "relu"}
DENSE_UNITS = 64
LOG_FLOOR = 1e-6


class InputScaler:
    """Optional log compression then per-channel standardisation.

    The statistics are fitted once on training patches and stored with the
    weights so inference sees the same scaling.
    """

    def __init__(self, channels: int, log: bool = True):
        self.log = log
        self.mean = np.zeros(channels)
        self.std = np.ones(channels)

    def _pre(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 20.0 * np.log10(np.abs(x) + LOG_FLOOR) if self.log else x

    def fit(self, images: np.ndarray) -> "InputScaler":
        z = self._pre(images)
        axes = tuple(range(z.ndim - 1))
        self.mean = z.mean(axis=axes)
        self.std = np.maximum(z.std(axis=axes), 1e-6)
        return self

    def __call__(self, images):
        return (self._pre(images) - self.mean) / self.std


class Network:
    def __init__(self, layers: list[Layer], input_shape: tuple, task: str,
                 scaler: InputScaler | None = None, profile: str = "custom"):
        if task not in HEADS:
            raise ValueError(f"unknown task {task!r}")
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.task = task
        self.profile = profile
        self.scaler = scaler

    # -- passes -----------------------------------------------------------
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def prepare(self, images: np.ndarray) -> np.ndarray:
        if tuple(images.shape[1:]) != self.input_shape:
            raise ValueError(f"network expects patches of {self.input_shape}, got {images.shape[1:]}")
        return self.scaler(images) if self.scaler is not None else np.asarray(images, dtype=np.float64)

    def predict(self, images: np.ndarray, batch: int = 128) -> np.ndarray:
        """Inference-mode outputs, one scalar per patch."""
        out = [self.forward(self.prepare(images[i:i + batch]))[:, 0]
               for i in range(0, len(images), batch)]
        return np.concatenate(out) if out else np.zeros(0)

    # -- parameters -------------------------------------------------------
    def parameters(self) -> list[np.ndarray]:
        return [layer.params[k] for layer in self.layers for k in sorted(layer.params)]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in sorted(layer.params)]

    def shape_trace(self) -> list[tuple]:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # -- files ------------------------------------------------------------
    def save(self, path: str) -> None:
        tensors = {}
        for i, layer in enumerate(self.layers):
            for k, v in {**layer.params, **layer.state}.items():
                tensors[f"{i}.{k}"] = v
        meta = {"task": self.task, "profile": self.profile, "input_shape": list(self.input_shape),
                "layers": [layer.config() for layer in self.layers]}
        if self.scaler is not None:
            tensors["scaler.mean"] = self.scaler.mean
            tensors["scaler.std"] = self.scaler.std
            meta["scaler_log"] = self.scaler.log
        write_tensors(tensors, path, meta)

    @classmethod
    def load(cls, path: str) -> "Network":
        tensors, meta = read_tensors(path)
        layers = [_layer_from_config(c) for c in meta["layers"]]
        for i, layer in enumerate(layers):
            for store in (layer.params, layer.state):
                for k in store:
                    store[k] = tensors[f"{i}.{k}"]
        scaler = None
        if "scaler.mean" in tensors:
            scaler = InputScaler(len(tensors["scaler.mean"]), meta.get("scaler_log", True))
            scaler.mean, scaler.std = tensors["scaler.mean"], tensors["scaler.std"]
        return cls(layers, tuple(meta["input_shape"]), meta["task"], scaler, meta["profile"])


def _layer_from_config(c: dict) -> Layer:
    kind = c["kind"]
    if kind == "conv":
        return Conv2D(c["in_channels"], c["filters"])
    if kind == "dense":
        return Dense(c["in_features"], c["units"])
    if kind == "batchnorm":
        return BatchNorm(c["channels"], c["momentum"], c["eps"])
    simple = {"maxpool": MaxPool, "relu": ReLU, "sigmoid": Sigmoid, "flatten": Flatten}
    if kind not in simple:
        raise ValueError(f"unknown layer kind {kind!r}")
    return simple[kind]()


def build_network(task: str, input_shape=(61, 61, 8), profile: str = "downscaled",
                  rng: np.random.Generator | None = None, filters=None,
                  dense_units: int = DENSE_UNITS) -> Network:
    """Two conv-conv-BN-pool blocks, a conv-conv block, then dense layers.

    ``task`` picks the head: sigmoid for detection, ReLU for size.
    """
    if task not in HEADS:
        raise ValueError(f"unknown task {task!r}")
    f1, f2, f3 = filters if filters is not None else PROFILES[profile]
    rng = rng if rng is not None else np.random.default_rng(0)
    h, w, c = input_shape
    layers: list[Layer] = []
    for f in (f1, f2):
        layers += [Conv2D(c, f, rng), ReLU(), Conv2D(f, f, rng), ReLU(), BatchNorm(f), MaxPool()]
        c = f
        h, w = h // 2, w // 2
    layers += [Conv2D(c, f3, rng), ReLU(), Conv2D(f3, f3, rng), ReLU(), Flatten(),
               Dense(h * w * f3, dense_units, rng), ReLU(), Dense(dense_units, 1, rng)]
    layers.append(Sigmoid() if HEADS[task] == "sigmoid" else ReLU())
    return Network(layers, tuple(input_shape), task, None, profile)
