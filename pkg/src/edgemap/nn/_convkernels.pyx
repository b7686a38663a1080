# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution kernels: typed im2col loops feeding BLAS gemm.

Same contract as _conv_numpy: stride 1, zero-padded 'same', odd kernel.
Row-major arrays are passed to Fortran gemm through the usual transpose
identity (C = A B  <=>  C^T = B^T A^T).
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused floating:
    float
    double


cdef void _im2col(floating[:, :, :, ::1] x, floating[:, ::1] cols, int k) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int p = k // 2
    cdef Py_ssize_t b, i, j, ch, u, v, row, col, ii, jj
    for b in range(n):
        for i in range(h):
            for j in range(w):
                row = (b * h + i) * w + j
                col = 0
                for ch in range(c):
                    for u in range(k):
                        ii = i + u - p
                        if 0 <= ii < h:
                            for v in range(k):
                                jj = j + v - p
                                if 0 <= jj < w:
                                    cols[row, col] = x[b, ch, ii, jj]
                                else:
                                    cols[row, col] = 0
                                col += 1
                        else:
                            for v in range(k):
                                cols[row, col] = 0
                                col += 1


cdef void _gemm(bint trans_a, bint trans_b, int m, int n, int kk,
                floating* a, int lda, floating* b, int ldb,
                floating* c, int ldc) noexcept nogil:
    cdef char transa = 84 if trans_a else 78  # 'T' / 'N'
    cdef char transb = 84 if trans_b else 78
    cdef floating one = 1
    cdef floating zero = 0
    if floating is float:
        sgemm(&transa, &transb, &m, &n, &kk, &one, a, &lda, b, &ldb, &zero, c, &ldc)
    else:
        dgemm(&transa, &transb, &m, &n, &kk, &one, a, &lda, b, &ldb, &zero, c, &ldc)


def _conv_forward_impl(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, cols_arr, y_arr):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], wd = x.shape[3]
    cdef int k = <int> w.shape[2]
    cdef int c_out = <int> w.shape[0]
    cdef int m = <int> (n * h * wd)
    cdef int kdim = <int> (w.shape[1] * k * k)
    cdef floating[:, ::1] cols = cols_arr
    cdef floating[:, ::1] ymat = y_arr
    cdef floating* wptr = &w[0, 0, 0, 0]
    with nogil:
        _im2col(x, cols, k)
        # Y[m, c_out] = COLS[m, kdim] @ W[c_out, kdim]^T  (row-major views)
        _gemm(True, False, c_out, m, kdim, wptr, kdim, &cols[0, 0], kdim,
              &ymat[0, 0], c_out)


def conv_forward(x, w):
    """y[n,o,i,j] = sum_{c,u,v} x_pad[n,c,i+u-p,j+v-p] * w[o,c,u,v]."""
    n, c, h, wd = x.shape
    c_out, c_in, k, k2 = w.shape
    if c_in != c or k != k2 or k % 2 == 0:
        raise ValueError(f"bad kernel shape {w.shape} for input {x.shape}")
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    cols = np.empty((n * h * wd, c * k * k), dtype=x.dtype)
    ymat = np.empty((n * h * wd, c_out), dtype=x.dtype)
    _conv_forward_impl(x, w, cols, ymat)
    return np.ascontiguousarray(ymat.reshape(n, h, wd, c_out).transpose(0, 3, 1, 2))


def _weight_grad_impl(floating[:, :, :, ::1] x, floating[:, ::1] dym,
                      cols_arr, dw_arr, int k):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], wd = x.shape[3]
    cdef int m = <int> (n * h * wd)
    cdef int kdim = <int> (x.shape[1] * k * k)
    cdef int c_out = <int> dym.shape[1]
    cdef floating[:, ::1] cols = cols_arr
    cdef floating[:, ::1] dw = dw_arr
    with nogil:
        _im2col(x, cols, k)
        # DW[c_out, kdim] = DYM[m, c_out]^T @ COLS[m, kdim]  (row-major views)
        _gemm(False, True, kdim, c_out, m, &cols[0, 0], kdim, &dym[0, 0], c_out,
              &dw[0, 0], kdim)


def conv_weight_grad(x, dy, k):
    """dw[o,c,u,v] = sum_{n,i,j} x_pad[n,c,i+u,j+v] * dy[n,o,i,j]."""
    n, c, h, wd = x.shape
    c_out = dy.shape[1]
    x = np.ascontiguousarray(x)
    dym = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * h * wd, c_out)
    cols = np.empty((n * h * wd, c * k * k), dtype=x.dtype)
    dw = np.empty((c_out, c * k * k), dtype=x.dtype)
    _weight_grad_impl(x, dym, cols, dw, k)
    return dw.reshape(c_out, c, k, k)
