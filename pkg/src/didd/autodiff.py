"""Tape-based reverse-mode automatic differentiation over NumPy arrays.

A Tape records operations in execution order (define-by-run), which is
already a topological order, so backward is a single reverse sweep. Tensors
hold float32 data by default; reductions accumulate in float64 and cast back.
float64 tensors are supported throughout so gradients can be checked against
central finite differences without float32 noise.

Ops record onto the innermost active Tape only when some input requires
gradients and recording is not suspended by no_grad(). Without an active
tape, ops run as plain NumPy (inference mode).
"""

import numpy as np

from . import kernels


class ShapeError(ValueError):
    pass


_tape_stack = []
_grad_enabled = True


class Tape:
    """Ordered record of op outputs for one forward pass."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack.pop()
        if popped is not self:
            raise RuntimeError("Tape stack corrupted: exited a tape that is not innermost")
        return False


class no_grad:
    """Suspends recording inside the block even if a tape is active."""

    __slots__ = ("_prev",)

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _active_tape():
    if _grad_enabled and _tape_stack:
        return _tape_stack[-1]
    return None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype != np.float32 and arr.dtype != np.float64:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has {self.data.size} elements, expected 1")
        return self.data.item()

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)


def _record(out, inputs, backward_fn):
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._backward = backward_fn
        tape.nodes.append(out)
    return out


def _acc(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        # copy: g is often a view into (or alias of) a child's buffer
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(tape, loss):
    """Runs the reverse sweep of `tape`, seeding d(loss)/d(loss) = 1.

    Every requires_grad tensor reachable from `loss` accumulates its
    gradient; anything unreachable is left untouched (parameters keep
    whatever zero_grads() put there).
    """
    if not isinstance(loss, Tensor):
        raise TypeError(f"backward: loss must be a Tensor, got {type(loss).__name__}")
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not tape.nodes:
        raise ValueError("backward: tape is empty, nothing was recorded")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not require grad (not connected to the tape)")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


def zero_grads(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# --- elementwise arithmetic ---


def add(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out = Tensor(a.data + b)

        def back(g):
            _acc(a, _unbroadcast(g, a.data.shape))

        return _record(out, (a,), back)
    if not isinstance(a, Tensor):
        return add(b, a)
    out = Tensor(a.data + b.data)

    def back(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _record(out, (a, b), back)


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -b)
    if not isinstance(a, Tensor):
        out = Tensor(a - b.data)

        def back(g):
            _acc(b, _unbroadcast(-g, b.data.shape))

        return _record(out, (b,), back)
    out = Tensor(a.data - b.data)

    def back(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(-g, b.data.shape))

    return _record(out, (a, b), back)


def mul(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out = Tensor(a.data * b)

        def back(g):
            _acc(a, _unbroadcast(g * b, a.data.shape))

        return _record(out, (a,), back)
    if not isinstance(a, Tensor):
        return mul(b, a)
    out = Tensor(a.data * b.data)

    def back(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), back)


# --- activations and pointwise nonlinearities ---


def relu(x):
    out = Tensor(np.maximum(x.data, 0))

    def back(g):
        _acc(x, g * (x.data > 0))

    return _record(out, (x,), back)


def leaky_relu(x, slope=0.2):
    out = Tensor(np.where(x.data > 0, x.data, x.data * x.data.dtype.type(slope)))

    def back(g):
        _acc(x, np.where(x.data > 0, g, g * g.dtype.type(slope)))

    return _record(out, (x,), back)


def tanh(x):
    y = np.tanh(x.data)
    out = Tensor(y)

    def back(g):
        _acc(x, g * (1.0 - y * y))

    return _record(out, (x,), back)


def sigmoid(x):
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out = Tensor(y.astype(x.data.dtype, copy=False))

    def back(g):
        _acc(x, g * (out.data * (1.0 - out.data)))

    return _record(out, (x,), back)


def abs_(x):
    out = Tensor(np.abs(x.data))

    def back(g):
        _acc(x, g * np.sign(x.data))

    return _record(out, (x,), back)


def log(x):
    out = Tensor(np.log(x.data))

    def back(g):
        _acc(x, g / x.data)

    return _record(out, (x,), back)


def clamp(x, lo, hi):
    out = Tensor(np.clip(x.data, lo, hi))

    def back(g):
        _acc(x, g * ((x.data >= lo) & (x.data <= hi)))

    return _record(out, (x,), back)


# --- reductions ---


def sum_(x):
    out = Tensor(np.asarray(np.sum(x.data, dtype=np.float64), dtype=x.data.dtype))

    def back(g):
        _acc(x, np.broadcast_to(g, x.data.shape))

    return _record(out, (x,), back)


def mean(x):
    n = x.data.size
    out = Tensor(np.asarray(np.sum(x.data, dtype=np.float64) / n, dtype=x.data.dtype))

    def back(g):
        _acc(x, np.broadcast_to(g / n, x.data.shape))

    return _record(out, (x,), back)


# --- shape ops ---


def reshape(x, shape):
    try:
        y = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {x.data.shape} as {shape}: {e}") from None
    out = Tensor(y)

    def back(g):
        _acc(x, g.reshape(x.data.shape))

    return _record(out, (x,), back)


def concat(tensors, axis):
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]

    def back(g):
        start = 0
        for t, n in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + n)
            _acc(t, g[tuple(idx)])
            start += n

    return _record(out, tuple(tensors), back)


# --- dense / matrix ops ---


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def back(g):
        if a.requires_grad:
            _acc(a, g @ b.data.T)
        if b.requires_grad:
            _acc(b, a.data.T @ g)

    return _record(out, (a, b), back)


def affine(x, w, b):
    """x [n, in] @ w [out, in]^T + b [out] -> [n, out]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"affine: incompatible shapes x={x.data.shape} w={w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"affine: bias shape {b.data.shape} does not match out={w.data.shape[0]}")
    out = Tensor(x.data @ w.data.T + b.data)

    def back(g):
        if x.requires_grad:
            _acc(x, g @ w.data)
        if w.requires_grad:
            _acc(w, g.T @ x.data)
        if b.requires_grad:
            _acc(b, np.sum(g, axis=0, dtype=np.float64).astype(b.data.dtype))

    return _record(out, (x, w, b), back)


# --- convolutions (stride/pad as in the 4x4 stride-2 blocks, but general) ---


def conv2d(x, w, b, stride=2, pad=1):
    """Strided 2-D convolution. x [n,ic,h,w], w [oc,ic,k,k], b [oc]."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D x and w, got {x.data.shape}, {w.data.shape}")
    n, ic, h, wd = x.data.shape
    oc, wic, k, k2 = w.data.shape
    if wic != ic or k != k2:
        raise ShapeError(f"conv2d: weight {w.data.shape} does not match input channels {ic}")
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    cols = kernels.im2col(np.ascontiguousarray(x.data), k, stride, pad)
    w2 = w.data.reshape(oc, ic * k * k)
    y2 = w2 @ cols
    y2 += b.data[:, None]
    out = Tensor(np.ascontiguousarray(y2.reshape(oc, n, oh, ow).transpose(1, 0, 2, 3)))

    def back(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(oc, n * oh * ow)
        if x.requires_grad:
            dcols = w2.T @ g2
            _acc(x, kernels.col2im(dcols, n, ic, h, wd, k, stride, pad))
        if w.requires_grad:
            _acc(w, (g2 @ cols.T).reshape(w.data.shape))
        if b.requires_grad:
            _acc(b, np.sum(g2, axis=1, dtype=np.float64).astype(b.data.dtype))

    return _record(out, (x, w, b), back)


def conv_transpose2d(x, w, b, stride=2, pad=1):
    """Strided 2-D transposed convolution (adjoint of conv2d in space).

    x [n,ic,h,w], w [oc,k,k,ic], b [oc]. The weight layout puts out-channels
    first so both the GEMM operand (oc*k*k, ic) and the spectral-norm view
    (oc, k*k*ic) are reshapes of the same buffer.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d: need 4-D x and w, got {x.data.shape}, {w.data.shape}")
    n, ic, h, wd = x.data.shape
    oc, k, k2, wic = w.data.shape
    if wic != ic or k != k2:
        raise ShapeError(f"conv_transpose2d: weight {w.data.shape} does not match input channels {ic}")
    oh = (h - 1) * stride - 2 * pad + k
    ow = (wd - 1) * stride - 2 * pad + k
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv_transpose2d: output {oh}x{ow} is empty")
    x2 = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(ic, n * h * wd)
    w2 = w.data.reshape(oc * k * k, ic)
    cols = w2 @ x2
    y = kernels.col2im(cols, n, oc, oh, ow, k, stride, pad)
    y += b.data[None, :, None, None]
    out = Tensor(y)

    def back(g):
        gcols = kernels.im2col(np.ascontiguousarray(g), k, stride, pad)
        if x.requires_grad:
            dx2 = w2.T @ gcols
            _acc(x, np.ascontiguousarray(dx2.reshape(ic, n, h, wd).transpose(1, 0, 2, 3)))
        if w.requires_grad:
            _acc(w, (gcols @ x2.T).reshape(w.data.shape))
        if b.requires_grad:
            _acc(b, np.sum(g, axis=(0, 2, 3), dtype=np.float64).astype(b.data.dtype))

    return _record(out, (x, w, b), back)


def instance_norm(x, eps=1e-5):
    """Per-(sample, channel) normalization over the spatial axes, no affine."""
    if x.data.ndim != 4:
        raise ShapeError(f"instance_norm: need 4-D input, got {x.data.shape}")
    hw = x.data.shape[2] * x.data.shape[3]
    if hw < 2:
        raise ShapeError(f"instance_norm: spatial size {x.data.shape[2]}x{x.data.shape[3]} too small")
    mu = np.mean(x.data, axis=(2, 3), keepdims=True, dtype=np.float64)
    xhat = x.data - mu.astype(x.data.dtype)
    var = np.einsum("nchw,nchw->nc", xhat, xhat, dtype=np.float64) / hw
    inv = (1.0 / np.sqrt(var + eps)).astype(x.data.dtype)[:, :, None, None]
    xhat *= inv
    out = Tensor(xhat)

    def back(g):
        gm = np.mean(g, axis=(2, 3), keepdims=True, dtype=np.float64).astype(g.dtype)
        gx = (np.einsum("nchw,nchw->nc", g, xhat, dtype=np.float64)
              / hw).astype(g.dtype)[:, :, None, None]
        d = g - gm
        d -= xhat * gx
        d *= inv
        _acc(x, d)

    return _record(out, (x,), back)
