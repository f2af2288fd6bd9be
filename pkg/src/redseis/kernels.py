"""Hot convolution kernels with backend selection.

Two interchangeable implementations of the batched 3x3 zero-padded
convolution and its backward pass:

``compiled``
    The Cython extension ``redseis._ckernels`` (direct loops, GIL released).
``numpy``
    Shifted-slice im2col followed by a BLAS matmul.

The compiled core is used when it imports; set ``REDSEIS_BACKEND=numpy`` to
force the fallback. Both follow the cross-correlation convention
``out[o, y, x] = b[o] + sum_{i,ky,kx} w[o, i, ky, kx] * x[i, y+ky-1, x+kx-1]``
with zero padding outside the grid.
"""
import os

import numpy as np


def _im2col(x):
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2))
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((n, c, 3, 3, h, w))
    for ky in range(3):
        for kx in range(3):
            cols[:, :, ky, kx] = xp[:, :, ky:ky + h, kx:kx + w]
    return cols.reshape(n, c * 9, h * w)


def numpy_conv_forward(x, w, b):
    n, c_in, h, wd = x.shape
    c_out = w.shape[0]
    if w.shape[1:] != (c_in, 3, 3):
        raise ValueError("kernel shape does not match input channels")
    if b.shape != (c_out,):
        raise ValueError("bias length does not match output channels")
    out = np.matmul(w.reshape(c_out, c_in * 9), _im2col(x))
    out += b[None, :, None]
    return out.reshape(n, c_out, h, wd)


def numpy_conv_backward(x, w, gy):
    n, c_in, h, wd = x.shape
    c_out = w.shape[0]
    if gy.shape != (n, c_out, h, wd):
        raise ValueError("upstream gradient shape mismatch")
    g2 = gy.reshape(n, c_out, h * wd)
    gb = g2.sum(axis=(0, 2))
    gw = np.tensordot(g2, _im2col(x), axes=([0, 2], [0, 2])).reshape(c_out, c_in, 3, 3)
    gcols = np.matmul(w.reshape(c_out, c_in * 9).T, g2).reshape(n, c_in, 3, 3, h, wd)
    gxp = np.zeros((n, c_in, h + 2, wd + 2))
    for ky in range(3):
        for kx in range(3):
            gxp[:, :, ky:ky + h, kx:kx + wd] += gcols[:, :, ky, kx]
    return gxp[:, :, 1:-1, 1:-1].copy(), gw, gb


_BACKENDS = {"numpy": (numpy_conv_forward, numpy_conv_backward)}
try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    _BACKENDS["compiled"] = (_ckernels.conv_forward, _ckernels.conv_backward)

AVAILABLE_BACKENDS = tuple(sorted(_BACKENDS))


def _default_backend():
    requested = os.environ.get("REDSEIS_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(
                f"REDSEIS_BACKEND={requested!r} is not available; choose from {AVAILABLE_BACKENDS}"
            )
        return requested
    return "compiled" if "compiled" in _BACKENDS else "numpy"


BACKEND = _default_backend()


def _as_c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _pair(backend):
    name = backend or BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown conv backend {name!r}; available: {AVAILABLE_BACKENDS}") from None


def conv_forward(x, w, b, backend=None):
    """Batched same-size 3x3 convolution. ``x``: (N, Cin, H, W) -> (N, Cout, H, W)."""
    fwd, _ = _pair(backend)
    return fwd(_as_c(x), _as_c(w), _as_c(b))


def conv_backward(x, w, gy, backend=None):
    """Gradients ``(d input, d kernel, d bias)`` of ``sum(gy * conv_forward(x, w, b))``."""
    _, bwd = _pair(backend)
    return bwd(_as_c(x), _as_c(w), _as_c(gy))
