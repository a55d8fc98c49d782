"""Minimal differentiable computation: tensors, layers, losses, Adam."""

from .autograd import (
    CROSS_ENTROPY_FLOOR,
    Tensor,
    as_tensor,
    backward,
    clip,
    concat,
    conv1d,
    exp,
    factored_cross_entropy,
    linear,
    log,
    matmul,
    minimum,
    no_grad,
    relu,
    reshape,
    segment_softmax,
    sigmoid,
    take_along_last,
    tanh,
    tmean,
    tsum,
)
from .optim import AdamState, adam_step
from .params import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, ModelParameters

__all__ = [
    "AdamState",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "CROSS_ENTROPY_FLOOR",
    "ModelParameters",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "clip",
    "concat",
    "conv1d",
    "exp",
    "factored_cross_entropy",
    "linear",
    "log",
    "matmul",
    "minimum",
    "no_grad",
    "relu",
    "reshape",
    "segment_softmax",
    "sigmoid",
    "take_along_last",
    "tanh",
    "tmean",
    "tsum",
]
