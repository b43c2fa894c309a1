"""NumPy reference implementation of the convolution rearrangement kernels.

Same contract as the compiled extension in _convcore.pyx; used as a fallback
when the extension was not built. Slower (strided-copy based) but exact.

Column layout, shared by both implementations:

    cols[(c*k + ki)*k + kj, (b*oh + i)*ow + j]
        = x[b, c, i*stride + ki - pad, j*stride + kj - pad]

with zeros where the source index falls outside the image. col2im is the
exact adjoint (scatter-add back into the image).
"""

import numpy as np

KERNEL_IMPL = "numpy"


def _out_hw(h, w, k, stride, pad):
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"im2col: window k={k} does not fit {h}x{w} (pad={pad})")
    return oh, ow


def im2col(x, k, stride, pad):
    b, c, h, w = x.shape
    oh, ow = _out_hw(h, w, k, stride, pad)
    if pad:
        xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, :, pad : pad + h, pad : pad + w] = x
    else:
        xp = x
    cols = np.empty((c, k, k, b, oh, ow), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
            cols[:, ki, kj] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * k * k, b * oh * ow)


def col2im(cols, b, c, h, w, k, stride, pad):
    oh, ow = _out_hw(h, w, k, stride, pad)
    cols6 = cols.reshape(c, k, k, b, oh, ow)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += cols6[
                :, ki, kj
            ].transpose(1, 0, 2, 3)
    if pad:
        return np.ascontiguousarray(xp[:, :, pad : pad + h, pad : pad + w])
    return xp
