# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: direct 2-D convolution (forward/backward),
2x2 average pooling, nearest upsampling, and cyclic Jacobi sweeps.

All arrays are C-contiguous float64; images are CHW. The pure-numpy
twin lives in `_slowkernels` and is selected automatically when this
extension is not built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

COMPILED = True


def conv2d_forward(cnp.ndarray x, cnp.ndarray w, cnp.ndarray b, int pad):
    cdef Py_ssize_t c_out = w.shape[0], c_in = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t h = x.shape[1], wd = x.shape[2]
    xp_arr = np.zeros((c_in, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp_arr[:, pad:pad + h, pad:pad + wd] = x
    out_arr = np.empty((c_out, h, wd), dtype=np.float64)

    cdef double[:, :, ::1] xp = xp_arr
    cdef double[:, :, :, ::1] wv = w
    cdef double[::1] bv = b
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, c, u, v, i, j
    cdef double wk

    with nogil:
        for o in range(c_out):
            for i in range(h):
                for j in range(wd):
                    out[o, i, j] = bv[o]
            for c in range(c_in):
                for u in range(k):
                    for v in range(k):
                        wk = wv[o, c, u, v]
                        for i in range(h):
                            for j in range(wd):
                                out[o, i, j] += wk * xp[c, i + u, j + v]
    return out_arr


def conv2d_backward(cnp.ndarray x, cnp.ndarray w, cnp.ndarray grad_out, int pad):
    cdef Py_ssize_t c_out = w.shape[0], c_in = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t h = x.shape[1], wd = x.shape[2]
    xp_arr = np.zeros((c_in, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp_arr[:, pad:pad + h, pad:pad + wd] = x
    gxp_arr = np.zeros_like(xp_arr)
    gw_arr = np.zeros((c_out, c_in, k, k), dtype=np.float64)
    gb_arr = np.zeros(c_out, dtype=np.float64)

    cdef double[:, :, ::1] xp = xp_arr
    cdef double[:, :, ::1] gxp = gxp_arr
    cdef double[:, :, :, ::1] wv = w
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef double[:, :, ::1] go = grad_out
    cdef Py_ssize_t o, c, u, v, i, j
    cdef double wk, acc, g

    with nogil:
        for o in range(c_out):
            acc = 0.0
            for i in range(h):
                for j in range(wd):
                    acc += go[o, i, j]
            gb[o] = acc
            for c in range(c_in):
                for u in range(k):
                    for v in range(k):
                        wk = wv[o, c, u, v]
                        acc = 0.0
                        for i in range(h):
                            for j in range(wd):
                                g = go[o, i, j]
                                acc += g * xp[c, i + u, j + v]
                                gxp[c, i + u, j + v] += wk * g
                        gw[o, c, u, v] = acc
    gx_arr = np.ascontiguousarray(gxp_arr[:, pad:pad + h, pad:pad + wd])
    return gx_arr, gw_arr, gb_arr


def avgpool2_forward(cnp.ndarray x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.empty((c, h // 2, w // 2), dtype=np.float64)
    cdef double[:, :, ::1] xv = x
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j
    with nogil:
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[ci, i, j] = 0.25 * (
                        xv[ci, 2 * i, 2 * j] + xv[ci, 2 * i, 2 * j + 1]
                        + xv[ci, 2 * i + 1, 2 * j] + xv[ci, 2 * i + 1, 2 * j + 1]
                    )
    return out_arr


def upsample_forward(cnp.ndarray x, int factor):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.empty((c, h * factor, w * factor), dtype=np.float64)
    cdef double[:, :, ::1] xv = x
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, di, dj
    cdef double val
    with nogil:
        for ci in range(c):
            for i in range(h):
                for j in range(w):
                    val = xv[ci, i, j]
                    for di in range(factor):
                        for dj in range(factor):
                            out[ci, i * factor + di, j * factor + dj] = val
    return out_arr


def upsample_backward(cnp.ndarray grad_out, int factor):
    cdef Py_ssize_t c = grad_out.shape[0]
    cdef Py_ssize_t h = grad_out.shape[1] // factor, w = grad_out.shape[2] // factor
    gx_arr = np.zeros((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] go = grad_out
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t ci, i, j, di, dj
    cdef double acc
    with nogil:
        for ci in range(c):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for di in range(factor):
                        for dj in range(factor):
                            acc += go[ci, i * factor + di, j * factor + dj]
                    gx[ci, i, j] = acc
    return gx_arr


def jacobi_sweep(cnp.ndarray a, cnp.ndarray v):
    """One cyclic Jacobi sweep over the upper triangle of symmetric `a`.

    Rotates `a` toward diagonal form and accumulates the eigenvector
    matrix `v`, both in place. Returns the number of rotations applied.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef double[:, ::1] av = a
    cdef double[:, ::1] vv = v
    cdef Py_ssize_t p, q, i
    cdef double apq, app, aqq, tau, t, c, s, aip, aiq
    cdef long rotations = 0

    with nogil:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = av[p, q]
                if apq == 0.0:
                    continue
                app = av[p, p]
                aqq = av[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (p,q) rotation [[c, s], [-s, c]]
                for i in range(n):
                    aip = av[p, i]
                    aiq = av[q, i]
                    av[p, i] = c * aip - s * aiq
                    av[q, i] = s * aip + c * aiq
                for i in range(n):
                    aip = av[i, p]
                    aiq = av[i, q]
                    av[i, p] = c * aip - s * aiq
                    av[i, q] = s * aip + c * aiq
                av[p, q] = 0.0
                av[q, p] = 0.0
                for i in range(n):
                    aip = vv[i, p]
                    aiq = vv[i, q]
                    vv[i, p] = c * aip - s * aiq
                    vv[i, q] = s * aip + c * aiq
                rotations += 1
    return rotations
