"""Layers with explicit forward and backward passes.

Every layer caches what its backward pass needs during ``forward`` and writes
parameter gradients into the ``grads`` dict under its own parameter names.
Arrays are (N, C, H, W).
"""
from __future__ import annotations

import numpy as np

from .. import _kernels
from ..errors import ShapeError, StateError


class Layer:
    def __init__(self, name=""):
        self.name = name
        self._cache = None

    def param_shapes(self) -> dict:
        return {}

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__} {self.name!r}: backward called without a forward pass")
        cache, self._cache = self._cache, None
        return cache


class Conv3x3(Layer):
    """3x3 convolution, stride 1, zero 'same' padding."""

    def __init__(self, name, cin, cout):
        super().__init__(name)
        self.cin, self.cout = cin, cout

    def param_shapes(self):
        return {f"{self.name}.W": (self.cout, self.cin, 3, 3), f"{self.name}.b": (self.cout,)}

    def fan_in(self):
        return self.cin * 9

    def forward(self, x, params, state, train):
        if x.shape[1] != self.cin:
            raise ShapeError(f"{self.name}: expected {self.cin} channels, got {x.shape[1]}")
        n, _, h, w = x.shape
        W = params[f"{self.name}.W"]
        cols = _kernels.im2col3x3(x)
        y = cols @ W.reshape(self.cout, -1).T + params[f"{self.name}.b"]
        self._cache = (cols, x.shape)
        return np.ascontiguousarray(y.reshape(n, h, w, self.cout).transpose(0, 3, 1, 2))

    def backward(self, dy, params, grads):
        cols, xshape = self._take_cache()
        W = params[f"{self.name}.W"]
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, self.cout)
        grads[f"{self.name}.W"] = (dy2.T @ cols).reshape(W.shape)
        grads[f"{self.name}.b"] = dy2.sum(axis=0)
        return _kernels.col2im3x3(dy2 @ W.reshape(self.cout, -1), xshape)


class Conv1x1(Layer):
    def __init__(self, name, cin, cout):
        super().__init__(name)
        self.cin, self.cout = cin, cout

    def param_shapes(self):
        return {f"{self.name}.W": (self.cout, self.cin, 1, 1), f"{self.name}.b": (self.cout,)}

    def fan_in(self):
        return self.cin

    def forward(self, x, params, state, train):
        if x.shape[1] != self.cin:
            raise ShapeError(f"{self.name}: expected {self.cin} channels, got {x.shape[1]}")
        W = params[f"{self.name}.W"].reshape(self.cout, self.cin)
        self._cache = x
        y = np.einsum("oc,nchw->nohw", W, x, optimize=True)
        return y + params[f"{self.name}.b"][None, :, None, None]

    def backward(self, dy, params, grads):
        x = self._take_cache()
        W = params[f"{self.name}.W"]
        grads[f"{self.name}.W"] = np.einsum("nohw,nchw->oc", dy, x, optimize=True).reshape(W.shape)
        grads[f"{self.name}.b"] = dy.sum(axis=(0, 2, 3))
        return np.einsum("oc,nohw->nchw", W.reshape(self.cout, self.cin), dy, optimize=True)


class TransposedConv3x3(Layer):
    """3x3 transposed convolution with stride 2 and 'same' padding: (H, W) -> (2H, 2W).

    Input pixel (i, j) scatters into output rows 2i..2i+2 and columns 2j..2j+2;
    the overhang past 2H / 2W is cropped.
    """

    def __init__(self, name, cin, cout):
        super().__init__(name)
        self.cin, self.cout = cin, cout

    def param_shapes(self):
        return {f"{self.name}.W": (self.cout, self.cin, 3, 3), f"{self.name}.b": (self.cout,)}

    def fan_in(self):
        return self.cin * 9

    def forward(self, x, params, state, train):
        if x.shape[1] != self.cin:
            raise ShapeError(f"{self.name}: expected {self.cin} channels, got {x.shape[1]}")
        n, c, h, w = x.shape
        W = params[f"{self.name}.W"]
        # taps: (N, O, 3, 3, H, W)
        wm = W.transpose(0, 2, 3, 1).reshape(self.cout * 9, c)
        taps = (wm @ x.reshape(n, c, h * w)).reshape(n, self.cout, 3, 3, h, w)
        full = np.zeros((n, self.cout, 2 * h + 1, 2 * w + 1), dtype=x.dtype)
        for ky in range(3):
            for kx in range(3):
                full[:, :, ky:ky + 2 * h:2, kx:kx + 2 * w:2] += taps[:, :, ky, kx]
        self._cache = x
        return full[:, :, :2 * h, :2 * w] + params[f"{self.name}.b"][None, :, None, None]

    def backward(self, dy, params, grads):
        x = self._take_cache()
        n, c, h, w = x.shape
        W = params[f"{self.name}.W"]
        full = np.zeros((n, self.cout, 2 * h + 1, 2 * w + 1), dtype=dy.dtype)
        full[:, :, :2 * h, :2 * w] = dy
        g = np.empty((n, self.cout, 3, 3, h, w), dtype=dy.dtype)
        for ky in range(3):
            for kx in range(3):
                g[:, :, ky, kx] = full[:, :, ky:ky + 2 * h:2, kx:kx + 2 * w:2]
        g = g.reshape(n, self.cout * 9, h * w)
        xf = x.reshape(n, c, h * w)
        # dW[o*9+k, c] = sum_n g[n] @ x[n]^T
        dwm = np.einsum("nkp,ncp->kc", g, xf, optimize=True)
        grads[f"{self.name}.W"] = dwm.reshape(self.cout, 3, 3, c).transpose(0, 3, 1, 2).copy()
        grads[f"{self.name}.b"] = dy.sum(axis=(0, 2, 3))
        wm = W.transpose(0, 2, 3, 1).reshape(self.cout * 9, c)
        return (wm.T @ g).reshape(n, c, h, w)


class BatchNorm(Layer):
    """Per-channel batch normalization.

    Training mode normalizes with batch statistics (biased variance) and updates
    the running averages; eval mode uses the running averages.
    """

    def __init__(self, name, channels, momentum=0.99, eps=1e-3):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps

    def param_shapes(self):
        return {f"{self.name}.gamma": (self.channels,), f"{self.name}.beta": (self.channels,)}

    def state_shapes(self):
        return {f"{self.name}.running_mean": (self.channels,), f"{self.name}.running_var": (self.channels,)}

    def forward(self, x, params, state, train):
        gamma = params[f"{self.name}.gamma"][None, :, None, None]
        beta = params[f"{self.name}.beta"][None, :, None, None]
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if state is not None:
                m = self.momentum
                rm, rv = f"{self.name}.running_mean", f"{self.name}.running_var"
                state[rm] = m * state[rm] + (1 - m) * mean
                state[rv] = m * state[rv] + (1 - m) * var
        else:
            mean = state[f"{self.name}.running_mean"]
            var = state[f"{self.name}.running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        self._cache = (xhat, inv, train)
        return gamma * xhat + beta

    def backward(self, dy, params, grads):
        xhat, inv, train = self._take_cache()
        gamma = params[f"{self.name}.gamma"]
        grads[f"{self.name}.gamma"] = (dy * xhat).sum(axis=(0, 2, 3))
        grads[f"{self.name}.beta"] = dy.sum(axis=(0, 2, 3))
        dxhat = dy * gamma[None, :, None, None]
        scale = inv[None, :, None, None]
        if not train:
            return dxhat * scale
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        mean_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True) / m
        mean_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True) / m
        return scale * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


class ReLU(Layer):
    def forward(self, x, params, state, train):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy, params, grads):
        return dy * self._take_cache()


class MaxPool2x2(Layer):
    def forward(self, x, params, state, train):
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"max pool needs even spatial dims, got {x.shape[2:]}")
        out, idx = _kernels.maxpool2x2_forward(x)
        self._cache = idx
        return out

    def backward(self, dy, params, grads):
        return _kernels.maxpool2x2_backward(dy, self._take_cache())


class Concat(Layer):
    """Channel concatenation of two inputs; backward splits the gradient."""

    def forward(self, a, b):
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise ShapeError(f"cannot concatenate {a.shape} and {b.shape}")
        self._cache = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, dy):
        ca = self._take_cache()
        return dy[:, :ca], dy[:, ca:]


class Softmax(Layer):
    """Softmax over the channel axis."""

    def forward(self, x, params, state, train):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        self._cache = p
        return p

    def backward(self, dp, params, grads):
        p = self._take_cache()
        return p * (dp - (dp * p).sum(axis=1, keepdims=True))
