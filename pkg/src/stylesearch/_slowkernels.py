"""Pure-numpy fallback for the compiled hot kernels.

Same call signatures as the Cython module `_hotkernels`: all arrays are
C-contiguous float64, images are CHW. Convolutions are direct
(accumulated over kernel offsets), not im2col, so the arithmetic matches
the compiled loops up to summation order.
"""

from __future__ import annotations

import numpy as np

COMPILED = False


def conv2d_forward(x, w, b, pad):
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + h, pad:pad + wd] = x
    out = np.broadcast_to(b[:, None, None], (c_out, h, wd)).copy()
    for u in range(k):
        for v in range(k):
            patch = xp[:, u:u + h, v:v + wd]
            out += np.tensordot(w[:, :, u, v], patch, axes=([1], [0]))
    return out


def conv2d_backward(x, w, grad_out, pad):
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + h, pad:pad + wd] = x
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros_like(w)
    for u in range(k):
        for v in range(k):
            patch = xp[:, u:u + h, v:v + wd]
            grad_w[:, :, u, v] = np.tensordot(grad_out, patch, axes=([1, 2], [1, 2]))
            grad_xp[:, u:u + h, v:v + wd] += np.tensordot(
                w[:, :, u, v], grad_out, axes=([0], [0])
            )
    grad_b = grad_out.sum(axis=(1, 2))
    grad_x = grad_xp[:, pad:pad + h, pad:pad + wd].copy()
    return grad_x, grad_w, grad_b


def avgpool2_forward(x):
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def upsample_forward(x, factor):
    return np.repeat(np.repeat(x, factor, axis=1), factor, axis=2)


def upsample_backward(grad_out, factor):
    c, fh, fw = grad_out.shape
    h, w = fh // factor, fw // factor
    return grad_out.reshape(c, h, factor, w, factor).sum(axis=(2, 4))


def jacobi_sweep(a, v):
    """One cyclic Jacobi sweep over the upper triangle of symmetric `a`.

    Rotates `a` toward diagonal form and accumulates the eigenvector
    matrix `v`, both in place. Returns the number of rotations applied
    (pairs with negligible off-diagonal mass are skipped).
    """
    n = a.shape[0]
    rotations = 0
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = a[p, q]
            if apq == 0.0:
                continue
            app, aqq = a[p, p], a[q, q]
            tau = (aqq - app) / (2.0 * apq)
            if tau >= 0.0:
                t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
            else:
                t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rot = np.array([[c, s], [-s, c]])
            rows = rot.T @ a[[p, q], :]
            a[[p, q], :] = rows
            cols = a[:, [p, q]] @ rot
            a[:, [p, q]] = cols
            a[p, q] = 0.0
            a[q, p] = 0.0
            v[:, [p, q]] = v[:, [p, q]] @ rot
            rotations += 1
    return rotations
