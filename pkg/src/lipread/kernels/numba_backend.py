"""Numba-jitted kernel implementations.

Same contracts as the numpy backend. The memory-bound gather/scatter work
(im2col, pooling, LSTM time stepping) runs in @njit loops; matrix products
stay on np.dot so BLAS does the arithmetic. cache=True persists compiled
kernels across processes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _im2col(x, kh, kw):
    n, h, w, c = x.shape
    ho = h - kh + 1
    wo = w - kw + 1
    cols = np.empty((n * ho * wo, kh * kw * c), dtype=x.dtype)
    row = 0
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                k = 0
                for a in range(kh):
                    for bcol in range(kw):
                        for ch in range(c):
                            cols[row, k] = x[nn, i + a, j + bcol, ch]
                            k += 1
                row += 1
    return cols


@njit(cache=True)
def _corr2d_impl(x, w):
    kh, kw, cin, cout = w.shape
    n, h, ww, _ = x.shape
    ho = h - kh + 1
    wo = ww - kw + 1
    cols = _im2col(x, kh, kw)
    wmat = np.ascontiguousarray(w).reshape(kh * kw * cin, cout)
    y = np.dot(cols, wmat)
    return y.reshape(n, ho, wo, cout)


def corr2d(x, w):
    return _corr2d_impl(np.ascontiguousarray(x), np.ascontiguousarray(w))


@njit(cache=True)
def _corr2d_dw_impl(x, dy):
    n, h, w, cin = x.shape
    _, ho, wo, cout = dy.shape
    kh = h - ho + 1
    kw = w - wo + 1
    cols = _im2col(x, kh, kw)  # (n*ho*wo, kh*kw*cin)
    dymat = np.ascontiguousarray(dy).reshape(n * ho * wo, cout)
    dwmat = np.dot(cols.T, dymat)
    return dwmat.reshape(kh, kw, cin, cout)


def corr2d_dw(x, dy):
    return _corr2d_dw_impl(np.ascontiguousarray(x), np.ascontiguousarray(dy))


@njit(cache=True)
def _depthwise_impl(x, w):
    kh, kw, c = w.shape
    n, h, ww, _ = x.shape
    ho = h - kh + 1
    wo = ww - kw + 1
    y = np.zeros((n, ho, wo, c), dtype=x.dtype)
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(kh):
                    for bcol in range(kw):
                        for ch in range(c):
                            y[nn, i, j, ch] += x[nn, i + a, j + bcol, ch] * w[a, bcol, ch]
    return y


def depthwise(x, w):
    return _depthwise_impl(np.ascontiguousarray(x), np.ascontiguousarray(w))


@njit(cache=True)
def _depthwise_dw_impl(x, dy):
    n, h, w, c = x.shape
    _, ho, wo, _ = dy.shape
    kh = h - ho + 1
    kw = w - wo + 1
    dw = np.zeros((kh, kw, c), dtype=x.dtype)
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(kh):
                    for bcol in range(kw):
                        for ch in range(c):
                            dw[a, bcol, ch] += x[nn, i + a, j + bcol, ch] * dy[nn, i, j, ch]
    return dw


def depthwise_dw(x, dy):
    return _depthwise_dw_impl(np.ascontiguousarray(x), np.ascontiguousarray(dy))


@njit(cache=True)
def _maxpool_impl(x, size, stride):
    n, h, w, c = x.shape
    ho = (h - size) // stride + 1
    wo = (w - size) // stride + 1
    y = np.empty((n, ho, wo, c), dtype=x.dtype)
    arg = np.empty((n, ho, wo, c), dtype=np.int64)
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    best = -np.inf
                    best_idx = 0
                    for a in range(size):
                        for bcol in range(size):
                            v = x[nn, i * stride + a, j * stride + bcol, ch]
                            if v > best:
                                best = v
                                best_idx = (i * stride + a) * w + (j * stride + bcol)
                    y[nn, i, j, ch] = best
                    arg[nn, i, j, ch] = best_idx
    return y, arg


def maxpool(x, size, stride):
    return _maxpool_impl(np.ascontiguousarray(x), size, stride)


@njit(cache=True)
def _maxpool_grad_impl(arg, dy, h, w):
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h * w, c), dtype=dy.dtype)
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    dx[nn, arg[nn, i, j, ch], ch] += dy[nn, i, j, ch]
    return dx.reshape(n, h, w, c)


def maxpool_grad(arg, dy, h, w):
    return _maxpool_grad_impl(np.ascontiguousarray(arg), np.ascontiguousarray(dy), h, w)


@njit(cache=True)
def _avgpool_impl(x, size, stride):
    n, h, w, c = x.shape
    ho = (h - size) // stride + 1
    wo = (w - size) // stride + 1
    y = np.zeros((n, ho, wo, c), dtype=x.dtype)
    inv = 1.0 / (size * size)
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(size):
                    for bcol in range(size):
                        for ch in range(c):
                            y[nn, i, j, ch] += x[nn, i * stride + a, j * stride + bcol, ch]
    return y * inv


def avgpool(x, size, stride):
    return _avgpool_impl(np.ascontiguousarray(x), size, stride)


@njit(cache=True)
def _avgpool_grad_impl(dy, h, w, size, stride):
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h, w, c), dtype=dy.dtype)
    inv = 1.0 / (size * size)
    for nn in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(size):
                    for bcol in range(size):
                        for ch in range(c):
                            dx[nn, i * stride + a, j * stride + bcol, ch] += dy[nn, i, j, ch] * inv
    return dx


def avgpool_grad(dy, h, w, size, stride):
    return _avgpool_grad_impl(np.ascontiguousarray(dy), h, w, size, stride)


@njit(cache=True)
def _lstm_forward_impl(x, wx, wh, b):
    n, t, d = x.shape
    hidden = wh.shape[0]
    xz = np.dot(np.ascontiguousarray(x).reshape(n * t, d), wx).reshape(n, t, 4 * hidden)
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
        z = xz[:, step] + np.dot(h, wh) + b
        for nn in range(n):
            for k in range(hidden):
                i = 1.0 / (1.0 + np.exp(-z[nn, k]))
                f = 1.0 / (1.0 + np.exp(-z[nn, hidden + k]))
                g = np.tanh(z[nn, 2 * hidden + k])
                o = 1.0 / (1.0 + np.exp(-z[nn, 3 * hidden + k]))
                cv = f * c[nn, k] + i * g
                th = np.tanh(cv)
                c[nn, k] = cv
                h[nn, k] = o * th
                gi[nn, step, k] = i
                gf[nn, step, k] = f
                gg[nn, step, k] = g
                go[nn, step, k] = o
                cs[nn, step, k] = cv
                tc[nn, step, k] = th
                hs[nn, step, k] = h[nn, k]
    return h, hs, cs, gi, gf, gg, go, tc


def lstm_forward(x, wx, wh, b):
    x = np.ascontiguousarray(x)
    h, hs, cs, gi, gf, gg, go, tc = _lstm_forward_impl(
        x, np.ascontiguousarray(wx), np.ascontiguousarray(wh), np.ascontiguousarray(b)
    )
    return h, (x, hs, cs, gi, gf, gg, go, tc)


@njit(cache=True)
def _lstm_backward_impl(wx, wh, x, hs, cs, gi, gf, gg, go, tc, dh_last):
    n, t, d = x.shape
    hidden = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden)
    dx = np.empty_like(x)
    dh = dh_last.copy()
    dc = np.zeros((n, hidden))
    wxt = np.ascontiguousarray(wx.T)
    wht = np.ascontiguousarray(wh.T)
    dz = np.empty((n, 4 * hidden))
    for step in range(t - 1, -1, -1):
        for nn in range(n):
            for k in range(hidden):
                i = gi[nn, step, k]
                f = gf[nn, step, k]
                g = gg[nn, step, k]
                o = go[nn, step, k]
                th = tc[nn, step, k]
                c_prev = cs[nn, step - 1, k] if step > 0 else 0.0
                dcv = dc[nn, k] + dh[nn, k] * o * (1.0 - th * th)
                dz[nn, k] = dcv * g * i * (1.0 - i)
                dz[nn, hidden + k] = dcv * c_prev * f * (1.0 - f)
                dz[nn, 2 * hidden + k] = dcv * i * (1.0 - g * g)
                dz[nn, 3 * hidden + k] = dh[nn, k] * th * o * (1.0 - o)
                dc[nn, k] = dcv * f
        dx[:, step] = np.dot(dz, wxt)
        xt = np.ascontiguousarray(x[:, step]).T
        dwx += np.dot(np.ascontiguousarray(xt), dz)
        if step > 0:
            hp = np.ascontiguousarray(hs[:, step - 1]).T
            dwh += np.dot(np.ascontiguousarray(hp), dz)
        for col in range(4 * hidden):
            s = 0.0
            for nn in range(n):
                s += dz[nn, col]
            db[col] += s
        dh = np.dot(dz, wht)
    return dx, dwx, dwh, db


def lstm_backward(wx, wh, cache, dh_last):
    x, hs, cs, gi, gf, gg, go, tc = cache
    return _lstm_backward_impl(
        np.ascontiguousarray(wx),
        np.ascontiguousarray(wh),
        x,
        hs,
        cs,
        gi,
        gf,
        gg,
        go,
        tc,
        np.ascontiguousarray(dh_last),
    )
