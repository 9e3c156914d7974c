"""Pure-numpy kernel implementations.

Correlations use stride-trick window views feeding one tensordot (BLAS);
pool backward scatters through strided slice assignment, which is safe
because a fixed in-window offset touches each output cell once.

All kernels are valid-mode, stride-1 for correlation; padding and bias live
in the dispatch wrappers. Layouts: activations (N, H, W, C), conv weights
(KH, KW, Cin, Cout), depthwise weights (KH, KW, C), LSTM weights (D, 4H) and
(H, 4H) with gate columns ordered i, f, g, o.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (N, Ho, Wo, C, KH, KW)
    return sliding_window_view(x, (kh, kw), axis=(1, 2))


def corr2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    kh, kw = w.shape[:2]
    win = _windows(x, kh, kw)
    return np.tensordot(win, w, axes=([4, 5, 3], [0, 1, 2]))


def corr2d_dw(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    kh = x.shape[1] - dy.shape[1] + 1
    kw = x.shape[2] - dy.shape[2] + 1
    win = _windows(x, kh, kw)
    dw = np.tensordot(win, dy, axes=([0, 1, 2], [0, 1, 2]))  # (C, KH, KW, Cout)
    return np.ascontiguousarray(dw.transpose(1, 2, 0, 3))


def depthwise(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    kh, kw = w.shape[:2]
    win = _windows(x, kh, kw)
    return np.einsum("nijckl,klc->nijc", win, w, optimize=True)


def depthwise_dw(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    kh = x.shape[1] - dy.shape[1] + 1
    kw = x.shape[2] - dy.shape[2] + 1
    win = _windows(x, kh, kw)
    return np.einsum("nijckl,nijc->klc", win, dy, optimize=True)


def _pool_geometry(h: int, w: int, size: int, stride: int) -> tuple[int, int]:
    return (h - size) // stride + 1, (w - size) // stride + 1


def maxpool(x: np.ndarray, size: int, stride: int):
    n, h, w, c = x.shape
    win = _windows(x, size, size)[:, ::stride, ::stride]  # (N, Ho, Wo, C, s, s)
    ho, wo = win.shape[1], win.shape[2]
    flat = win.reshape(n, ho, wo, c, size * size)
    local = flat.argmax(axis=4)
    y = np.take_along_axis(flat, local[..., None], axis=4)[..., 0]
    i = np.arange(ho)[None, :, None, None] * stride + local // size
    j = np.arange(wo)[None, None, :, None] * stride + local % size
    arg = (i * w + j).astype(np.int64)  # flat spatial index into the input
    return y, arg


def maxpool_grad(arg: np.ndarray, dy: np.ndarray, h: int, w: int) -> np.ndarray:
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h * w, c), dtype=dy.dtype)
    n_idx = np.arange(n)[:, None, None, None]
    c_idx = np.arange(c)[None, None, None, :]
    np.add.at(dx, (np.broadcast_to(n_idx, arg.shape), arg, np.broadcast_to(c_idx, arg.shape)), dy)
    return dx.reshape(n, h, w, c)


def avgpool(x: np.ndarray, size: int, stride: int) -> np.ndarray:
    win = _windows(x, size, size)[:, ::stride, ::stride]
    return win.mean(axis=(4, 5))


def avgpool_grad(dy: np.ndarray, h: int, w: int, size: int, stride: int) -> np.ndarray:
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h, w, c), dtype=dy.dtype)
    g = dy / (size * size)
    for kh in range(size):
        for kw in range(size):
            dx[:, kh : kh + ho * stride : stride, kw : kw + wo * stride : stride] += g
    return dx


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def lstm_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    n, t, d = x.shape
    hidden = wh.shape[0]
    xz = x.reshape(n * t, d) @ wx
    xz = xz.reshape(n, t, 4 * hidden)
    hs = np.empty((n, t, hidden))
    cs = np.empty((n, t, hidden))
    gi = np.empty((n, t, hidden))
    gf = np.empty((n, t, hidden))
    gg = np.empty((n, t, hidden))
    go = np.empty((n, t, hidden))
    tc = np.empty((n, t, hidden))
    h = np.zeros((n, hidden))
    c = np.zeros((n, hidden))
    for step in range(t):
        z = xz[:, step] + h @ wh + b
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(z[:, 3 * hidden :])
        c = f * c + i * g
        th = np.tanh(c)
        h = o * th
        gi[:, step], gf[:, step], gg[:, step], go[:, step] = i, f, g, o
        cs[:, step], tc[:, step], hs[:, step] = c, th, h
    cache = (x, hs, cs, gi, gf, gg, go, tc)
    return h, cache


def lstm_backward(wx: np.ndarray, wh: np.ndarray, cache, dh_last: np.ndarray):
    x, hs, cs, gi, gf, gg, go, tc = cache
    n, t, d = x.shape
    hidden = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden)
    dx = np.empty_like(x)
    dh = dh_last.copy()
    dc = np.zeros((n, hidden))
    for step in range(t - 1, -1, -1):
        i, f, g, o = gi[:, step], gf[:, step], gg[:, step], go[:, step]
        th = tc[:, step]
        c_prev = cs[:, step - 1] if step > 0 else np.zeros((n, hidden))
        h_prev = hs[:, step - 1] if step > 0 else np.zeros((n, hidden))
        dc = dc + dh * o * (1.0 - th * th)
        dz = np.empty((n, 4 * hidden))
        dz[:, :hidden] = dc * g * i * (1.0 - i)
        dz[:, hidden : 2 * hidden] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hidden : 3 * hidden] = dc * i * (1.0 - g * g)
        dz[:, 3 * hidden :] = dh * th * o * (1.0 - o)
        dx[:, step] = dz @ wx.T
        dwx += x[:, step].T @ dz
        dwh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dh = dz @ wh.T
        dc = dc * f
    return dx, dwx, dwh, db
