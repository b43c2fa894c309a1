"""Network building blocks.

Down block: 4x4 conv, stride 2, pad 1 -> spectral weight scaling ->
instance norm -> leaky-relu(0.2). Up block: the transposed counterpart with
relu. The decoder's final block is a transposed conv straight into tanh
(no normalization of either kind). Dense layers are plain affine maps.

Spectral scaling keeps one persistent left-singular estimate `u` per block
and runs one power-iteration step per call to update_sigma(); the resulting
sigma is used as a detached constant, so no gradient flows through it.
"""

import numpy as np

from . import autodiff as ad

_EPS = 1e-12


def _l2(v):
    return float(np.sqrt(np.sum(v * v, dtype=np.float64)))


class ConvBlock:
    def __init__(self, weight, bias, *, transposed, act, norm=True, spectral=True,
                 u=None, stride=2, pad=1):
        if act not in ("lrelu", "relu", "tanh", "none"):
            raise ValueError(f"unknown activation {act!r}")
        self.weight = weight
        self.bias = bias
        self.transposed = transposed
        self.act = act
        self.norm = norm
        self.spectral = spectral
        self.stride = stride
        self.pad = pad
        self.sigma = 1.0
        if spectral:
            if u is None:
                raise ValueError("spectral blocks need a persistent u vector")
            self.u = np.asarray(u, dtype=np.float32).copy()
        else:
            self.u = None

    @property
    def out_channels(self):
        return self.weight.data.shape[0]

    def params(self):
        return [self.weight, self.bias]

    def spectral_matrix(self):
        """2-D view of the weight, out-channels by everything else."""
        w = self.weight.data
        return w.reshape(w.shape[0], -1)

    def _sigma_from(self, m, update):
        v = m.T @ self.u
        v /= _l2(v) + _EPS
        unew = m @ v
        sigma = _l2(unew) + _EPS
        if update:
            self.u = (unew / sigma).astype(np.float32)
        # quantize to float32 so checkpoints round-trip the exact value
        return float(np.float32(sigma))

    def update_sigma(self):
        """One power-iteration step; mutates u, stores and returns sigma."""
        if not self.spectral:
            return 1.0
        self.sigma = self._sigma_from(self.spectral_matrix(), update=True)
        return self.sigma

    def current_sigma(self):
        """Sigma estimate from the stored u, without touching state."""
        if not self.spectral:
            return 1.0
        self.sigma = self._sigma_from(self.spectral_matrix(), update=False)
        return self.sigma

    def forward(self, x):
        w = self.weight
        if self.spectral:
            w = ad.mul(w, 1.0 / self.sigma)
        if self.transposed:
            y = ad.conv_transpose2d(x, w, self.bias, self.stride, self.pad)
        else:
            y = ad.conv2d(x, w, self.bias, self.stride, self.pad)
        if self.norm:
            y = ad.instance_norm(y)
        if self.act == "lrelu":
            return ad.leaky_relu(y, 0.2)
        if self.act == "relu":
            return ad.relu(y)
        if self.act == "tanh":
            return ad.tanh(y)
        return y


class DenseLayer:
    def __init__(self, weight, bias, act="none"):
        if act not in ("lrelu", "sigmoid", "none"):
            raise ValueError(f"unknown activation {act!r}")
        self.weight = weight
        self.bias = bias
        self.act = act

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        y = ad.affine(x, self.weight, self.bias)
        if self.act == "lrelu":
            return ad.leaky_relu(y, 0.2)
        if self.act == "sigmoid":
            return ad.sigmoid(y)
        return y


def init_weight(gen, shape):
    """Weights ~ N(0, 0.02); float32."""
    return ad.Tensor(gen.normal(0.0, 0.02, size=shape).astype(np.float32), requires_grad=True)


def init_bias(n):
    return ad.Tensor(np.zeros(n, dtype=np.float32), requires_grad=True)


def init_u(gen, n):
    u = gen.normal(0.0, 1.0, size=n).astype(np.float32)
    return u / (_l2(u) + _EPS)


def down_block(gen, ic, oc, k=4):
    w = init_weight(gen, (oc, ic, k, k))
    return ConvBlock(w, init_bias(oc), transposed=False, act="lrelu", u=init_u(gen, oc))


def up_block(gen, ic, oc, k=4, final=False):
    w = init_weight(gen, (oc, k, k, ic))
    if final:
        return ConvBlock(w, init_bias(oc), transposed=True, act="tanh", norm=False, spectral=False)
    return ConvBlock(w, init_bias(oc), transposed=True, act="relu", u=init_u(gen, oc))


def dense(gen, n_in, n_out, act="none"):
    return DenseLayer(init_weight(gen, (n_out, n_in)), init_bias(n_out), act=act)
