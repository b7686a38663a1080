"""Convolution kernel backend selection.

The compiled extension (Cython im2col + BLAS gemm) is preferred when it
imported successfully; otherwise the numpy fallback is used. Selection
happens once at import and can be forced with EDGEMAP_KERNELS=numpy or
EDGEMAP_KERNELS=cython, or switched at runtime with set_backend() (used
by the backend-comparison tests and the benchmark).
"""

import os

from . import _conv_numpy

try:
    from . import _convkernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"numpy": _conv_numpy}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

_active_name = None
_active = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def set_backend(name):
    global _active_name, _active
    if name not in _BACKENDS:
        raise RuntimeError(
            f"kernel backend {name!r} unavailable (have: {', '.join(sorted(_BACKENDS))})")
    _active_name = name
    _active = _BACKENDS[name]


def backend_name():
    return _active_name


def conv_forward(x, w):
    return _active.conv_forward(x, w)


def conv_weight_grad(x, dy, k):
    return _active.conv_weight_grad(x, dy, k)


_env = os.environ.get("EDGEMAP_KERNELS", "").strip().lower()
if _env:
    set_backend(_env)
else:
    set_backend("cython" if _compiled is not None else "numpy")
