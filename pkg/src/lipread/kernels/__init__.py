"""Hot numeric kernels with selectable backends.

Two interchangeable implementations: a numba-jitted one (default when numba
imports) and a pure-numpy one. Selection order: explicit set_backend() call,
else the LIPREAD_BACKEND environment variable (auto | numba | numpy), else
auto. Matrix products go through BLAS in both backends; the backends differ
in how they gather windows and scatter gradients.

Public layouts: activations (N, H, W, C) float64, conv weights
(KH, KW, Cin, Cout), depthwise weights (KH, KW, C), LSTM gate columns
ordered i, f, g, o. Correlation stride is 1; downsampling is pooling's job.
"""

from __future__ import annotations

import os

import numpy as np

_impl = None
_name = None


def available_backends() -> tuple[str, ...]:
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.insert(0, "numba")
    except ImportError:
        pass
    return tuple(names)


def set_backend(name: str) -> str:
    """Select the kernel backend; returns the active backend name."""
    global _impl, _name
    if name == "auto":
        name = "numba" if "numba" in available_backends() else "numpy"
    if name == "numba":
        from . import numba_backend as impl
    elif name == "numpy":
        from . import numpy_backend as impl
    else:
        raise ValueError(f"unknown backend: {name!r} (use auto, numba or numpy)")
    _impl = impl
    _name = name
    return name


def active_backend() -> str:
    if _impl is None:
        set_backend(os.environ.get("LIPREAD_BACKEND", "auto"))
    return _name


def _backend():
    if _impl is None:
        active_backend()
    return _impl


def _pad_amounts(k: int) -> tuple[int, int]:
    return (k - 1) // 2, k // 2


def _pad_same(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    pt, pb = _pad_amounts(kh)
    pl, pr = _pad_amounts(kw)
    if pt or pb or pl or pr:
        return np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    return x


def conv2d_forward(x, w, b=None, padding: str = "same"):
    if padding == "same":
        x = _pad_same(x, w.shape[0], w.shape[1])
    elif padding != "valid":
        raise ValueError(f"unknown padding: {padding!r}")
    y = _backend().corr2d(x, w)
    if b is not None:
        y = y + b
    return y


def conv2d_backward(x, w, dy, padding: str = "same"):
    kh, kw = w.shape[:2]
    if padding == "same":
        xp = _pad_same(x, kh, kw)
    elif padding == "valid":
        xp = x
    else:
        raise ValueError(f"unknown padding: {padding!r}")
    impl = _backend()
    dw = impl.corr2d_dw(xp, dy)
    # Input gradient: full correlation of dy with the rotated kernel.
    wr = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    dyp = np.pad(dy, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    dxp = impl.corr2d(dyp, wr)
    if padding == "same":
        pt, _ = _pad_amounts(kh)
        pl, _ = _pad_amounts(kw)
        dx = dxp[:, pt : pt + x.shape[1], pl : pl + x.shape[2]]
    else:
        dx = dxp
    db = dy.sum(axis=(0, 1, 2))
    return np.ascontiguousarray(dx), dw, db


def depthwise_forward(x, w, b=None, padding: str = "same"):
    if padding == "same":
        x = _pad_same(x, w.shape[0], w.shape[1])
    elif padding != "valid":
        raise ValueError(f"unknown padding: {padding!r}")
    y = _backend().depthwise(x, w)
    if b is not None:
        y = y + b
    return y


def depthwise_backward(x, w, dy, padding: str = "same"):
    kh, kw = w.shape[:2]
    if padding == "same":
        xp = _pad_same(x, kh, kw)
    elif padding == "valid":
        xp = x
    else:
        raise ValueError(f"unknown padding: {padding!r}")
    impl = _backend()
    dw = impl.depthwise_dw(xp, dy)
    wr = np.ascontiguousarray(w[::-1, ::-1])
    dyp = np.pad(dy, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    dxp = impl.depthwise(dyp, wr)
    if padding == "same":
        pt, _ = _pad_amounts(kh)
        pl, _ = _pad_amounts(kw)
        dx = dxp[:, pt : pt + x.shape[1], pl : pl + x.shape[2]]
    else:
        dx = dxp
    db = dy.sum(axis=(0, 1, 2))
    return np.ascontiguousarray(dx), dw, db


def maxpool_forward(x, size: int, stride: int | None = None):
    return _backend().maxpool(x, size, stride or size)


def maxpool_backward(arg, dy, input_hw):
    h, w = input_hw
    return _backend().maxpool_grad(arg, dy, h, w)


def avgpool_forward(x, size: int, stride: int | None = None):
    return _backend().avgpool(x, size, stride or size)


def avgpool_backward(dy, input_hw, size: int, stride: int | None = None):
    h, w = input_hw
    return _backend().avgpool_grad(dy, h, w, size, stride or size)


def lstm_forward(x, wx, wh, b):
    return _backend().lstm_forward(x, wx, wh, b)


def lstm_backward(wx, wh, cache, dh_last):
    return _backend().lstm_backward(wx, wh, cache, dh_last)
