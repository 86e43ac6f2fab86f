"""A small NHWC convolutional network library with hand-written gradients."""

from .layers import (BatchNorm, Conv2D, Dense, Flatten, Layer, MaxPool, ReLU, Sigmoid, conv2d,
                     he_normal, relu, sigmoid)
from .losses import bce_loss, mse_loss
from .network import PROFILES, InputScaler, Network, build_network
from .optim import AdamConfig, AdamState, adam_step
from .training import TrainConfig, TrainingDiverged, TrainResult, gradient_check, score, train

__all__ = [
    "BatchNorm", "Conv2D", "Dense", "Flatten", "Layer", "MaxPool", "ReLU", "Sigmoid", "conv2d",
    "he_normal", "relu", "sigmoid", "bce_loss", "mse_loss", "PROFILES", "InputScaler", "Network",
    "build_network", "AdamConfig", "AdamState", "adam_step", "TrainConfig", "TrainingDiverged",
    "TrainResult", "gradient_check", "score", "train",
]
