"""Pure-numpy convolution kernels (fallback backend).

Stride-1, zero-padded 'same' convolution for odd kernel sizes, via
im2col (sliding windows) and BLAS matmul. The compiled extension in
_convkernels.pyx implements the same two primitives.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _cols(x, k):
    """im2col matrix of shape (N*H*W, C*k*k) for same-padding."""
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def conv_forward(x, w):
    """y[n,o,i,j] = sum_{c,u,v} x_pad[n,c,i+u-p,j+v-p] * w[o,c,u,v]."""
    n, c, h, wd = x.shape
    c_out, c_in, k, k2 = w.shape
    if c_in != c or k != k2 or k % 2 == 0:
        raise ValueError(f"bad kernel shape {w.shape} for input {x.shape}")
    cols = _cols(x, k)
    y = cols @ w.reshape(c_out, -1).T
    return np.ascontiguousarray(y.reshape(n, h, wd, c_out).transpose(0, 3, 1, 2))


def conv_weight_grad(x, dy, k):
    """dw[o,c,u,v] = sum_{n,i,j} x_pad[n,c,i+u,j+v] * dy[n,o,i,j]."""
    n, c, h, wd = x.shape
    c_out = dy.shape[1]
    cols = _cols(x, k)
    dym = dy.transpose(0, 2, 3, 1).reshape(n * h * wd, c_out)
    return np.ascontiguousarray((dym.T @ cols).reshape(c_out, c, k, k))
