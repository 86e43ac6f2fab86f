"""Mini-batch training loop, curves and finite-difference gradient checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .losses import LOSSES
from .network import Network
from .optim import AdamConfig, AdamState, adam_step


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "bce"
    epochs: int = 35
    batch: int = 64
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be at least 1")

    @classmethod
    def for_task(cls, task: str, **kw) -> "TrainConfig":
        base = {"detection": dict(loss="bce", epochs=35), "size": dict(loss="mse", epochs=40)}[task]
        return cls(**{**base, **kw})


def score(task: str, pred: np.ndarray, target: np.ndarray) -> float:
    """Accuracy at 0.5 for detection, R^2 for size."""
    if len(pred) == 0:
        return float("nan")
    if task == "detection":
        return float(np.mean((pred >= 0.5) == (target >= 0.5)))
    ss_tot = np.sum((target - target.mean()) ** 2)
    return float(1.0 - np.sum((pred - target) ** 2) / ss_tot) if ss_tot > 0 else float("nan")


@dataclass
class TrainResult:
    curves: list[dict]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.curves[0]))
            w.writeheader()
            for row in self.curves:
                w.writerow({k: f"{v:.6g}" if isinstance(v, float) else v for k, v in row.items()})


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    out = [order[i:i + size] for i in range(0, n, size)]
    # batch norm needs two samples; fold a lone tail into the previous batch
    if len(out) > 1 and len(out[-1]) < 2:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


def train(network: Network, images: np.ndarray, labels: np.ndarray, config: TrainConfig,
          rng: np.random.Generator, validation: tuple | None = None) -> TrainResult:
    """Adam over shuffled mini-batches; returns per-epoch loss and score curves.

    ``validation`` is an optional (images, labels) pair scored in inference
    mode after every epoch.
    """
    if len(images) == 0:
        raise ValueError("empty training set")
    labels = np.asarray(labels, dtype=float)
    loss_fn = LOSSES[config.loss]
    x_all = network.prepare(images)
    state = AdamState()
    curves = []
    for epoch in range(1, config.epochs + 1):
        total, preds, targets = 0.0, [], []
        for idx in _batches(len(x_all), config.batch, rng):
            y = network.forward(x_all[idx], training=True)
            loss, dy = loss_fn(y, labels[idx, None])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            network.backward(dy)
            adam_step(network.parameters(), network.gradients(), state, config.adam)
            total += loss * len(idx)
            preds.append(y[:, 0])
            targets.append(labels[idx])
        row = {"epoch": epoch, "train_loss": total / len(x_all),
               "train_score": score(network.task, np.concatenate(preds), np.concatenate(targets))}
        if validation is not None:
            vx, vy = validation
            vy = np.asarray(vy, dtype=float)
            p = network.predict(vx)
            row["val_loss"] = loss_fn(p, vy)[0]
            row["val_score"] = score(network.task, p, vy)
        curves.append(row)
    return TrainResult(curves)


def _loss_and_grads(network, x, t, loss_fn, training):
    y = network.forward(x, training)
    loss, dy = loss_fn(y, t)
    network.backward(dy)
    return loss, [g.copy() for g in network.gradients()]


def _selections(network):
    return [None if (s := layer.selection()) is None else s.copy() for layer in network.layers]


def gradient_check(network: Network, x: np.ndarray, target: np.ndarray, loss: str = "mse",
                   eps: float = 1e-5, training: bool = True, max_entries: int = 64,
                   rng: np.random.Generator | None = None, stats: dict | None = None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Per parameter tensor the error is ||a - n|| / max(||a|| + ||n||, 1e-12) over
    up to ``max_entries`` randomly chosen entries; the input gradient is
    checked the same way. Batch-norm running statistics are restored after
    every evaluation so the probe leaves the network unchanged.

    An entry whose +-eps probe flips a ReLU or max-pool selection straddles a
    kink, where the central difference is meaningless; such entries are
    skipped and counted in ``stats["skipped"]`` (``stats["checked"]`` counts
    the rest).
    """
    loss_fn = LOSSES[loss]
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    rng = rng if rng is not None else np.random.default_rng(0)
    saved = [{k: v.copy() for k, v in layer.state.items()} for layer in network.layers]

    def restore():
        for layer, st in zip(network.layers, saved):
            for k, v in st.items():
                layer.state[k] = v.copy()

    y = network.forward(x, training)
    base = _selections(network)
    _, dy = loss_fn(y, t)
    dx = network.backward(dy)
    grads = [g.copy() for g in network.gradients()]
    restore()

    def f(xx):
        val = loss_fn(network.forward(xx, training), t)[0]
        same = all(a is None or np.array_equal(a, b) for a, b in zip(base, _selections(network)))
        restore()
        return val, same

    worst, checked, skipped = 0.0, 0, 0
    for p, g in list(zip(network.parameters(), grads)) + [(x, dx)]:
        flat = p.reshape(-1)
        idx = np.arange(flat.size) if flat.size <= max_entries else rng.choice(
            flat.size, max_entries, replace=False)
        a, n = [], []
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            up, same_up = f(x)
            flat[i] = old - eps
            dn, same_dn = f(x)
            flat[i] = old
            if not (same_up and same_dn):
                skipped += 1
                continue
            n.append((up - dn) / (2 * eps))
            a.append(g.reshape(-1)[i])
        checked += len(a)
        if not a:
            continue
        a, n = np.asarray(a), np.asarray(n)
        err = np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
        worst = max(worst, float(err))
    if stats is not None:
        stats.update(checked=checked, skipped=skipped)
    return worst
