"""Minimal 1D neural-network kernel with manual backpropagation."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_layer, numerical_gradient, relative_error
from .layers import (
    BatchNorm1d,
    Conv1d,
    Layer,
    Linear,
    MaxPool1d,
    ParameterTable,
    ReLU,
    RoiPool1d,
    Sequential,
    Sigmoid,
    Softmax,
    roi_pool_1d,
    sigmoid,
    softmax,
)
from .losses import (
    binary_crossentropy,
    categorical_crossentropy,
    sigmoid_binary_crossentropy,
    smooth_l1,
    softmax_crossentropy,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "BatchNorm1d",
    "Conv1d",
    "Layer",
    "Linear",
    "MaxPool1d",
    "ParameterTable",
    "ReLU",
    "RoiPool1d",
    "Sequential",
    "Sigmoid",
    "Softmax",
    "adam_step",
    "binary_crossentropy",
    "categorical_crossentropy",
    "check_layer",
    "load_checkpoint",
    "numerical_gradient",
    "relative_error",
    "roi_pool_1d",
    "save_checkpoint",
    "sigmoid",
    "sigmoid_binary_crossentropy",
    "smooth_l1",
    "softmax",
    "softmax_crossentropy",
]
