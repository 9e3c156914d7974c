"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during forward. Parameters
and their gradients are exposed as (name, array) items; arrays are live
references so optimizers can update in place. Activations are float64
(N, H, W, C) for spatial layers.
"""

from __future__ import annotations

import numpy as np

from .. import kernels as K
from ..errors import ShapeMismatch


class Layer:
    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param_items(self):
        return ()

    def grad_items(self):
        return ()


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = np.zeros((in_dim, out_dim))
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        self.w[:] = he_normal(rng, self.w.shape, self.in_dim)
        self.b[:] = 0.0

    def forward(self, x, train=False):
        if x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"dense expects {self.in_dim} features, got {x.shape[1]}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.dw[:] = self._x.T @ dy
        self.db[:] = dy.sum(axis=0)
        return dy @ self.w.T

    def param_items(self):
        return (("w", self.w), ("b", self.b))

    def grad_items(self):
        return (("w", self.dw), ("b", self.db))


class Conv2D(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, padding: str = "same"):
        self.padding = padding
        self.w = np.zeros((kernel, kernel, in_channels, out_channels))
        self.b = np.zeros(out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        kh, kw, cin, _ = self.w.shape
        self.w[:] = he_normal(rng, self.w.shape, kh * kw * cin)
        self.b[:] = 0.0

    def forward(self, x, train=False):
        if x.shape[3] != self.w.shape[2]:
            raise ShapeMismatch(
                f"conv expects {self.w.shape[2]} channels, got {x.shape[3]}"
            )
        self._x = x
        return K.conv2d_forward(x, self.w, self.b, self.padding)

    def backward(self, dy):
        dx, dw, db = K.conv2d_backward(self._x, self.w, dy, self.padding)
        self.dw[:] = dw
        self.db[:] = db
        return dx

    def param_items(self):
        return (("w", self.w), ("b", self.b))

    def grad_items(self):
        return (("w", self.dw), ("b", self.db))


class DepthwiseConv2D(Layer):
    def __init__(self, channels: int, kernel: int = 3, padding: str = "same"):
        self.padding = padding
        self.w = np.zeros((kernel, kernel, channels))
        self.b = np.zeros(channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        kh, kw, _ = self.w.shape
        self.w[:] = he_normal(rng, self.w.shape, kh * kw)
        self.b[:] = 0.0

    def forward(self, x, train=False):
        if x.shape[3] != self.w.shape[2]:
            raise ShapeMismatch(
                f"depthwise conv expects {self.w.shape[2]} channels, got {x.shape[3]}"
            )
        self._x = x
        return K.depthwise_forward(x, self.w, self.b, self.padding)

    def backward(self, dy):
        dx, dw, db = K.depthwise_backward(self._x, self.w, dy, self.padding)
        self.dw[:] = dw
        self.db[:] = db
        return dx

    def param_items(self):
        return (("w", self.w), ("b", self.b))

    def grad_items(self):
        return (("w", self.dw), ("b", self.db))


class MaxPool2D(Layer):
    def __init__(self, size: int = 2, stride: int | None = None):
        self.size = size
        self.stride = stride or size

    def forward(self, x, train=False):
        self._hw = x.shape[1:3]
        y, self._arg = K.maxpool_forward(x, self.size, self.stride)
        return y

    def backward(self, dy):
        return K.maxpool_backward(self._arg, dy, self._hw)


class AvgPool2D(Layer):
    def __init__(self, size: int = 2, stride: int | None = None):
        self.size = size
        self.stride = stride or size

    def forward(self, x, train=False):
        self._hw = x.shape[1:3]
        return K.avgpool_forward(x, self.size, self.stride)

    def backward(self, dy):
        return K.avgpool_backward(dy, self._hw, self.size, self.stride)


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        n, h, w, c = self._shape
        return np.broadcast_to(dy[:, None, None, :], self._shape) / (h * w)


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout; identity at inference. Mask stream is seeded at
    init_params so runs are reproducible."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._rng = np.random.default_rng(0)

    def init_params(self, rng):
        self._rng = np.random.default_rng(rng.integers(2**63))

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self._rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class LSTM(Layer):
    """(N, T, D) -> last hidden state (N, H). Gate order i, f, g, o;
    forget-gate bias starts at 1."""

    def __init__(self, in_dim: int, hidden: int):
        self.in_dim = in_dim
        self.hidden = hidden
        self.wx = np.zeros((in_dim, 4 * hidden))
        self.wh = np.zeros((hidden, 4 * hidden))
        self.b = np.zeros(4 * hidden)
        self.dwx = np.zeros_like(self.wx)
        self.dwh = np.zeros_like(self.wh)
        self.db = np.zeros_like(self.b)

    def init_params(self, rng):
        self.wx[:] = glorot_uniform(rng, self.wx.shape, self.in_dim, self.hidden)
        self.wh[:] = glorot_uniform(rng, self.wh.shape, self.hidden, self.hidden)
        self.b[:] = 0.0
        self.b[self.hidden : 2 * self.hidden] = 1.0

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise ShapeMismatch(f"lstm expects (N, T, {self.in_dim}), got {x.shape}")
        h, self._cache = K.lstm_forward(x, self.wx, self.wh, self.b)
        return h

    def backward(self, dy):
        dx, dwx, dwh, db = K.lstm_backward(self.wx, self.wh, self._cache, dy)
        self.dwx[:] = dwx
        self.dwh[:] = dwh
        self.db[:] = db
        return dx

    def param_items(self):
        return (("wx", self.wx), ("wh", self.wh), ("b", self.b))

    def grad_items(self):
        return (("wx", self.dwx), ("wh", self.dwh), ("b", self.db))


class TimeDistributed(Layer):
    """Applies an inner network to every timestep of (N, T, ...)."""

    def __init__(self, inner):
        self.inner = inner

    def init_params(self, rng):
        self.inner.init_params(rng)

    def forward(self, x, train=False):
        self._nt = x.shape[:2]
        flat = x.reshape(x.shape[0] * x.shape[1], *x.shape[2:])
        y = self.inner.forward(flat, train=train)
        return y.reshape(self._nt + y.shape[1:])

    def backward(self, dy):
        flat = dy.reshape(dy.shape[0] * dy.shape[1], *dy.shape[2:])
        dx = self.inner.backward(flat)
        return dx.reshape(self._nt + dx.shape[1:])

    def param_items(self):
        return tuple((f"td.{k}", v) for k, v in self.inner.param_items())

    def grad_items(self):
        return tuple((f"td.{k}", v) for k, v in self.inner.grad_items())


class Residual(Layer):
    """y = x + inner(x); inner must preserve shape."""

    def __init__(self, inner):
        self.inner = inner

    def init_params(self, rng):
        self.inner.init_params(rng)

    def forward(self, x, train=False):
        y = self.inner.forward(x, train=train)
        if y.shape != x.shape:
            raise ShapeMismatch(
                f"residual branch changed shape {x.shape} -> {y.shape}"
            )
        return x + y

    def backward(self, dy):
        return dy + self.inner.backward(dy)

    def param_items(self):
        return tuple((f"res.{k}", v) for k, v in self.inner.param_items())

    def grad_items(self):
        return tuple((f"res.{k}", v) for k, v in self.inner.grad_items())
