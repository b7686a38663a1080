"""Differentiable operations: forward and analytic backward passes.

All spatial ops are stride 1 with 'same' zero padding; resolution only
changes at the explicit 2x pool/upsample layers. Backward functions for
parameterized ops accumulate into the layer's gradient buffers and
return the input gradient. Every op checks its output for NaN/Inf
unless the guard is disabled (see set_nan_guard).
"""

import numpy as np

from ..errors import NumericError
from . import backend

_nan_guard = True


def set_nan_guard(enabled):
    global _nan_guard
    _nan_guard = bool(enabled)


def _guard(arr, what):
    if _nan_guard and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {what}")
    return arr


def _swapflip(w):
    """Kernel of the adjoint map: swap in/out channels and flip spatially."""
    return np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])


def conv2d(x, layer):
    """Same-padding cross-correlation with the layer's kernel plus bias."""
    y = backend.conv_forward(x, layer.weight)
    y += layer.bias[None, :, None, None]
    return _guard(y, "conv2d")


def conv2d_backward(x, layer, dy):
    """Accumulates dweight/dbias on the layer; returns dx."""
    k = layer.weight.shape[-1]
    layer.dweight += backend.conv_weight_grad(x, dy, k)
    layer.dbias += dy.sum(axis=(0, 2, 3))
    dx = backend.conv_forward(dy, _swapflip(layer.weight))
    return _guard(dx, "conv2d_backward")


def conv_transpose2d(x, layer):
    """Adjoint of conv2d for the layer's kernel (stored (C_in, C_out, k, k))."""
    y = backend.conv_forward(x, _swapflip(layer.weight))
    y += layer.bias[None, :, None, None]
    return _guard(y, "conv_transpose2d")


def conv_transpose2d_backward(x, layer, dy):
    k = layer.weight.shape[-1]
    # Gradient of the equivalent forward conv kernel, mapped back.
    layer.dweight += _swapflip(backend.conv_weight_grad(x, dy, k))
    layer.dbias += dy.sum(axis=(0, 2, 3))
    dx = backend.conv_forward(dy, layer.weight)
    return _guard(dx, "conv_transpose2d_backward")


def conv_adjoint(y, weight):
    """conv_transpose2d as a pure function of a shared conv kernel
    (C_out, C_in, k, k); used by the adjoint property test."""
    return backend.conv_forward(y, _swapflip(weight))


def maxpool2(x):
    """2x2 max pooling; returns (y, argmax record). Ties go to the first
    element in row-major window order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 requires even dims, got {h}x{w}")
    win = (x.reshape(n, c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h // 2, w // 2, 4))
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return _guard(y, "maxpool2"), idx


def maxpool2_backward(idx, dy):
    n, c, h2, w2 = dy.shape
    d = np.zeros((n, c, h2, w2, 4), dtype=dy.dtype)
    np.put_along_axis(d, idx[..., None], dy[..., None], axis=-1)
    dx = (d.reshape(n, c, h2, w2, 2, 2)
           .transpose(0, 1, 2, 4, 3, 5)
           .reshape(n, c, h2 * 2, w2 * 2))
    return np.ascontiguousarray(dx)


def upsample2(x):
    """Each pixel becomes a 2x2 block (row/column replication)."""
    return _guard(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3), "upsample2")


def upsample2_backward(dy):
    n, c, h, w = dy.shape
    return dy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def concat_channels(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat spatial/batch mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=1)


def split_channels(dy, c_a):
    return dy[:, :c_a], dy[:, c_a:]


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, dy):
    # Subgradient at 0 pinned to 0.
    return dy * (x > 0)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _guard(out, "sigmoid")


def tanh(x):
    return np.tanh(x)


def mse_loss(pred, target):
    """Pixelwise mean square error; returns (loss, dloss/dpred)."""
    if pred.shape != target.shape:
        raise ValueError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    dpred = (2.0 / diff.size) * diff
    if _nan_guard and not np.isfinite(loss):
        raise NumericError("non-finite MSE loss")
    return loss, dpred


def l2_penalty(params, rate):
    """rate * sum of squared parameter values, over all given params."""
    total = 0.0
    for (_, w, _) in params:
        total += float(np.sum(np.square(w, dtype=np.float64)))
    return rate * total
