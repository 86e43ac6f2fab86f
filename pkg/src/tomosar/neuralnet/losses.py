"""Scalar losses returning (value, gradient w.r.t. the prediction)."""

import numpy as np

BCE_CLAMP = 1e-7


def bce_loss(pred, target):
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float).reshape(pred.shape)
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
    grad = (p - target) / (p * (1.0 - p)) / pred.size
    # the clamp has zero slope outside its range
    grad = np.where((pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP), grad, 0.0)
    return float(loss), grad


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float).reshape(pred.shape)
    d = pred - target
    return float(np.mean(d * d)), 2.0 * d / pred.size


LOSSES = {"bce": bce_loss, "mse": mse_loss}
