# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution rearrangement kernels (im2col / col2im).

Column layout is documented in _convcore_np.py; the two implementations are
interchangeable and cross-checked in the test suite.
"""

import numpy as np

KERNEL_IMPL = "compiled"

ctypedef fused ftype:
    float
    double


def im2col(ftype[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if h + 2 * pad - k < 0 or w + 2 * pad - k < 0:
        raise ValueError(f"im2col: window k={k} does not fit {h}x{w} (pad={pad})")
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1

    if ftype is float:
        out = np.empty((c * k * k, b * oh * ow), dtype=np.float32)
    else:
        out = np.empty((c * k * k, b * oh * ow), dtype=np.float64)
    cdef ftype[:, ::1] cols = out

    cdef Py_ssize_t ci, ki, kj, bi, i, j, row, base, ii, j_lo, j_hi, off
    with nogil:
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    # j range with in-bounds source column j*stride + kj - pad
                    j_lo = 0
                    while j_lo * stride + kj - pad < 0:
                        j_lo += 1
                    j_hi = ow
                    while j_hi > j_lo and (j_hi - 1) * stride + kj - pad >= w:
                        j_hi -= 1
                    for bi in range(b):
                        for i in range(oh):
                            ii = i * stride + ki - pad
                            base = (bi * oh + i) * ow
                            if ii < 0 or ii >= h:
                                for j in range(ow):
                                    cols[row, base + j] = 0
                            else:
                                for j in range(j_lo):
                                    cols[row, base + j] = 0
                                off = j_lo * stride + kj - pad
                                for j in range(j_lo, j_hi):
                                    cols[row, base + j] = x[bi, ci, ii, off]
                                    off += stride
                                for j in range(j_hi, ow):
                                    cols[row, base + j] = 0
    return out


def col2im(ftype[:, ::1] cols, int b, int c, int h, int w, int k, int stride, int pad):
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    if cols.shape[0] != c * k * k or cols.shape[1] != b * oh * ow:
        raise ValueError(
            f"col2im: cols shape ({cols.shape[0]}, {cols.shape[1]}) does not match "
            f"b={b} c={c} h={h} w={w} k={k} stride={stride} pad={pad}"
        )

    if ftype is float:
        out = np.zeros((b, c, h, w), dtype=np.float32)
    else:
        out = np.zeros((b, c, h, w), dtype=np.float64)
    cdef ftype[:, :, :, ::1] img = out

    cdef Py_ssize_t ci, ki, kj, bi, i, j, row, base, ii, j_lo, j_hi, off
    with nogil:
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    j_lo = 0
                    while j_lo * stride + kj - pad < 0:
                        j_lo += 1
                    j_hi = ow
                    while j_hi > j_lo and (j_hi - 1) * stride + kj - pad >= w:
                        j_hi -= 1
                    for bi in range(b):
                        for i in range(oh):
                            ii = i * stride + ki - pad
                            if ii < 0 or ii >= h:
                                continue
                            base = (bi * oh + i) * ow
                            off = j_lo * stride + kj - pad
                            for j in range(j_lo, j_hi):
                                img[bi, ci, ii, off] += cols[row, base + j]
                                off += stride
    return out
