"""Reverse-mode differentiation for the two classifier architectures."""

from .checkpoint import load_checkpoint, save_checkpoint
from .module import Module, parameter
from .ops import (
    avgpool,
    concat,
    conv1d,
    conv2d,
    dropout,
    exp,
    flatten,
    global_avg_pool,
    grouped_conv1x1,
    linear,
    maxpool_time,
    mul_broadcast,
    neg,
    relu,
    reshape,
    sigmoid,
    softmax_cross_entropy,
    square,
    sub_broadcast,
    transpose,
)
from .optim import Adagrad, AdagradState, adagrad_step
from .tensor import DEBUG_ENV, Tape, Tensor, backward, set_debug

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "set_debug",
    "DEBUG_ENV",
    "Module",
    "parameter",
    "Adagrad",
    "AdagradState",
    "adagrad_step",
    "save_checkpoint",
    "load_checkpoint",
    "avgpool",
    "concat",
    "conv1d",
    "conv2d",
    "dropout",
    "exp",
    "flatten",
    "global_avg_pool",
    "grouped_conv1x1",
    "linear",
    "maxpool_time",
    "mul_broadcast",
    "neg",
    "relu",
    "reshape",
    "sigmoid",
    "softmax_cross_entropy",
    "square",
    "sub_broadcast",
    "transpose",
]
