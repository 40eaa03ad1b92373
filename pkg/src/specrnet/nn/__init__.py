from .backend import active_backend, available_backends, set_backend
from .layers import (
    BatchNorm2d,
    BiGRU,
    Conv2d,
    LeakyReLU,
    Linear,
    MaxPool2d,
    Parameter,
    Selu,
    Sigmoid,
    leaky_relu,
    selu,
    sigmoid,
)
from .loss import bce_loss
from .optim import Adam

__all__ = [
    "Adam", "BatchNorm2d", "BiGRU", "Conv2d", "LeakyReLU", "Linear",
    "MaxPool2d", "Parameter", "Selu", "Sigmoid", "active_backend",
    "available_backends", "bce_loss", "leaky_relu", "selu", "set_backend",
    "sigmoid",
]
