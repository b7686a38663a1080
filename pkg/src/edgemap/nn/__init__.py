"""Minimal differentiable-layer engine (no external ML framework)."""

from . import backend, ops
from .adam import AdamState, adam_step
from .convlstm import ConvLstmCell, convlstm_step
from .layers import ConvLayer, ConvTransposeLayer
from .ops import (concat_channels, conv2d, conv2d_backward, conv_adjoint,
                  conv_transpose2d, conv_transpose2d_backward, l2_penalty,
                  maxpool2, maxpool2_backward, mse_loss, relu, relu_backward,
                  set_nan_guard, sigmoid, split_channels, tanh, upsample2,
                  upsample2_backward)

__all__ = [
    "backend", "ops", "AdamState", "adam_step", "ConvLstmCell", "convlstm_step",
    "ConvLayer", "ConvTransposeLayer", "concat_channels", "conv2d",
    "conv2d_backward", "conv_adjoint", "conv_transpose2d",
    "conv_transpose2d_backward", "l2_penalty", "maxpool2", "maxpool2_backward",
    "mse_loss", "relu", "relu_backward", "set_nan_guard", "sigmoid",
    "split_channels", "tanh", "upsample2", "upsample2_backward",
]
