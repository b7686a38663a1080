"""Parameter-holding layers over the functional ops.

Weights initialize uniformly in +/- sqrt(6 / (fan_in + fan_out)), drawn
sequentially in row-major order from the provided PCG32 generator so
two builds from the same seed are bit-identical. Biases start at zero.
"""

import math

import numpy as np

from . import ops


def _init_uniform(shape, limit, rng, dtype):
    flat = np.empty(int(np.prod(shape)), dtype=np.float64)
    for i in range(flat.size):
        flat[i] = rng.uniform_in(-limit, limit)
    return flat.reshape(shape).astype(dtype)


class ConvLayer:
    """Stride-1 same-padding convolution, kernel (C_out, C_in, k, k)."""

    def __init__(self, in_channels, out_channels, kernel_size, rng=None,
                 dtype=np.float32, name="conv"):
        if kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd for same padding")
        self.name = name
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size * kernel_size
        fan_out = out_channels * kernel_size * kernel_size
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        if rng is None:
            self.weight = np.zeros(shape, dtype=dtype)
        else:
            self.weight = _init_uniform(shape, limit, rng, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)

    def forward(self, x):
        return ops.conv2d(x, self)

    def backward(self, x, dy):
        return ops.conv2d_backward(x, self, dy)

    def zero_grad(self):
        self.dweight[...] = 0
        self.dbias[...] = 0

    def params(self):
        return [(f"{self.name}.weight", self.weight, self.dweight),
                (f"{self.name}.bias", self.bias, self.dbias)]


class ConvTransposeLayer:
    """Adjoint-orientation convolution, kernel stored (C_in, C_out, k, k)."""

    def __init__(self, in_channels, out_channels, kernel_size, rng=None,
                 dtype=np.float32, name="conv_t"):
        if kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd for same padding")
        self.name = name
        shape = (in_channels, out_channels, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size * kernel_size
        fan_out = out_channels * kernel_size * kernel_size
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        if rng is None:
            self.weight = np.zeros(shape, dtype=dtype)
        else:
            self.weight = _init_uniform(shape, limit, rng, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)

    def forward(self, x):
        return ops.conv_transpose2d(x, self)

    def backward(self, x, dy):
        return ops.conv_transpose2d_backward(x, self, dy)

    def zero_grad(self):
        self.dweight[...] = 0
        self.dbias[...] = 0

    def params(self):
        return [(f"{self.name}.weight", self.weight, self.dweight),
                (f"{self.name}.bias", self.bias, self.dbias)]
