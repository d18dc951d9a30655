"""Minimal float64 tensor library for the network's forward and backward passes."""

from .checkpoint import load_arrays, save_arrays
from .kernels import backend
from .ops import (
    add,
    add_channel_bias,
    avgpool2d,
    concat,
    conv2d,
    conv_lstm_step,
    depthwise_conv2d,
    dueling_combine,
    gather,
    linear,
    mul,
    reshape,
    separable_conv2d,
    sigmoid,
    squared_error_loss,
    take,
    tanh,
    temporal_spatial_conv,
    total,
)
from .optim import RMSProp, clip_max_norm
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "Parameter",
    "RMSProp",
    "Tensor",
    "add",
    "add_channel_bias",
    "avgpool2d",
    "backend",
    "clip_max_norm",
    "concat",
    "conv2d",
    "conv_lstm_step",
    "depthwise_conv2d",
    "dueling_combine",
    "gather",
    "linear",
    "load_arrays",
    "mul",
    "no_grad",
    "reshape",
    "save_arrays",
    "separable_conv2d",
    "sigmoid",
    "squared_error_loss",
    "take",
    "tanh",
    "temporal_spatial_conv",
    "total",
]
