# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 3x3 zero-padded convolution kernels (forward and backward).

All arrays are C-contiguous float64. Layout is (batch, channel, row, col)
for activations and (out, in, 3, 3) for kernels. The convolution is a
cross-correlation: out[o, y, x] = b[o] + sum w[o, i, ky, kx] * in[i, y+ky-1, x+kx-1].
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _correlate_padded(const double* xp, const double* w, double* out,
                            Py_ssize_t c_in, Py_ssize_t c_out,
                            Py_ssize_t h, Py_ssize_t wd) noexcept nogil:
    # xp: (c_in, h+2, wd+2) padded input, w: (c_out, c_in, 3, 3), out: (c_out, h, wd) pre-filled
    cdef Py_ssize_t pw = wd + 2
    cdef Py_ssize_t plane = (h + 2) * pw
    cdef Py_ssize_t o, i, yy, xx
    cdef const double* wk
    cdef const double* r0
    cdef const double* r1
    cdef const double* r2
    cdef double* orow
    cdef double w00, w01, w02, w10, w11, w12, w20, w21, w22
    for o in range(c_out):
        for i in range(c_in):
            wk = w + (o * c_in + i) * 9
            w00 = wk[0]; w01 = wk[1]; w02 = wk[2]
            w10 = wk[3]; w11 = wk[4]; w12 = wk[5]
            w20 = wk[6]; w21 = wk[7]; w22 = wk[8]
            for yy in range(h):
                r0 = xp + i * plane + yy * pw
                r1 = r0 + pw
                r2 = r1 + pw
                orow = out + (o * h + yy) * wd
                for xx in range(wd):
                    orow[xx] += (w00 * r0[xx] + w01 * r0[xx + 1] + w02 * r0[xx + 2]
                                 + w10 * r1[xx] + w11 * r1[xx + 1] + w12 * r1[xx + 2]
                                 + w20 * r2[xx] + w21 * r2[xx + 1] + w22 * r2[xx + 2])


def _pad(x):
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = x
    return xp


def conv_forward(x, w, b):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n_batch = x.shape[0], c_in = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t c_out = w.shape[0]
    if w.shape[1] != c_in or w.shape[2] != 3 or w.shape[3] != 3:
        raise ValueError("kernel shape does not match input channels")
    if b.shape[0] != c_out:
        raise ValueError("bias length does not match output channels")
    out_arr = np.empty((n_batch, c_out, h, wd), dtype=np.float64)
    out_arr[...] = b[None, :, None, None]
    cdef double[:, :, :, ::1] xp = _pad(x)
    cdef double[:, :, :, ::1] out = out_arr
    cdef const double[:, :, :, ::1] wv = w
    cdef Py_ssize_t n
    with nogil:
        for n in range(n_batch):
            _correlate_padded(&xp[n, 0, 0, 0], &wv[0, 0, 0, 0], &out[n, 0, 0, 0],
                              c_in, c_out, h, wd)
    return out_arr


def conv_backward(x, w, gy):
    """Return (grad_input, grad_kernel, grad_bias) for an upstream gradient gy."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t n_batch = x.shape[0], c_in = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t c_out = w.shape[0]
    if gy.shape[0] != n_batch or gy.shape[1] != c_out or gy.shape[2] != h or gy.shape[3] != wd:
        raise ValueError("upstream gradient shape mismatch")
    # grad input is a correlation of gy with the spatially flipped, transposed kernel
    w_adj = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx_arr = np.zeros((n_batch, c_in, h, wd), dtype=np.float64)
    gw_arr = np.zeros((c_out, c_in, 3, 3), dtype=np.float64)
    gb_arr = gy.sum(axis=(0, 2, 3))
    cdef double[:, :, :, ::1] gyp = _pad(gy)
    cdef double[:, :, :, ::1] xp = _pad(x)
    cdef const double[:, :, :, ::1] gyv = gy
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef const double[:, :, :, ::1] wa = w_adj
    cdef Py_ssize_t n, o, i, yy, xx, pw = wd + 2
    cdef const double* grow
    cdef const double* r0
    cdef const double* r1
    cdef const double* r2
    cdef double g, a00, a01, a02, a10, a11, a12, a20, a21, a22
    with nogil:
        for n in range(n_batch):
            _correlate_padded(&gyp[n, 0, 0, 0], &wa[0, 0, 0, 0], &gx[n, 0, 0, 0],
                              c_out, c_in, h, wd)
        for o in range(c_out):
            for i in range(c_in):
                a00 = 0.0; a01 = 0.0; a02 = 0.0
                a10 = 0.0; a11 = 0.0; a12 = 0.0
                a20 = 0.0; a21 = 0.0; a22 = 0.0
                for n in range(n_batch):
                    for yy in range(h):
                        grow = &gyv[n, o, yy, 0]
                        r0 = &xp[n, i, yy, 0]
                        r1 = r0 + pw
                        r2 = r1 + pw
                        for xx in range(wd):
                            g = grow[xx]
                            a00 += g * r0[xx]; a01 += g * r0[xx + 1]; a02 += g * r0[xx + 2]
                            a10 += g * r1[xx]; a11 += g * r1[xx + 1]; a12 += g * r1[xx + 2]
                            a20 += g * r2[xx]; a21 += g * r2[xx + 1]; a22 += g * r2[xx + 2]
                gw[o, i, 0, 0] = a00; gw[o, i, 0, 1] = a01; gw[o, i, 0, 2] = a02
                gw[o, i, 1, 0] = a10; gw[o, i, 1, 1] = a11; gw[o, i, 1, 2] = a12
                gw[o, i, 2, 0] = a20; gw[o, i, 2, 1] = a21; gw[o, i, 2, 2] = a22
    return gx_arr, gw_arr, gb_arr
