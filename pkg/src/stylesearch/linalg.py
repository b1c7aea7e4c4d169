"""Symmetric eigendecomposition and matrix powers for feature whitening.

The solver is a cyclic Jacobi iteration: repeated sweeps of 2x2 rotations
over the upper triangle, each sweep strictly shrinking the off-diagonal
mass. Covariances here are population-normalized (divide by N, not N-1),
matching how whitening treats a feature map as the full distribution.
"""

from __future__ import annotations

import numpy as np

from stylesearch import kernels

MAX_SWEEPS = 100
CONVERGENCE_TOL = 1e-12


def covariance(features):
    """Mean and population covariance of row-variable data.

    `features` is (C, N): C variables observed N times. Returns
    (mean, cov) with mean shape (C,) and cov shape (C, C).
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("covariance expects a 2-d (C, N) array")
    if f.shape[1] < 1:
        raise ValueError("covariance needs at least one observation")
    mean = f.mean(axis=1)
    centered = f - mean[:, None]
    cov = (centered @ centered.T) / f.shape[1]
    return mean, cov


def off_norm(a) -> float:
    """Frobenius norm of the off-diagonal part.

    Summed directly over off-diagonal entries; subtracting the diagonal
    mass from the total would cancel catastrophically once the matrix is
    nearly diagonal, which is exactly when this norm is consulted.
    """
    a = np.asarray(a)
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt((off * off).sum()))


def sym_eig(a, tol: float = CONVERGENCE_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigenvalues (descending) and matching orthonormal eigenvector
    columns of a symmetric matrix, via cyclic Jacobi sweeps.

    Converged when the off-diagonal Frobenius mass drops below
    tol * ||A||_F; raises if that does not happen within max_sweeps.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("sym_eig expects a square matrix")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ValueError("sym_eig expects a symmetric matrix")
    n = a.shape[0]
    work = np.ascontiguousarray((a + a.T) * 0.5)
    vecs = np.eye(n)
    threshold = tol * float(np.sqrt((work * work).sum()))
    for _ in range(max_sweeps):
        if off_norm(work) <= threshold:
            break
        kernels.jacobi_sweep(work, vecs)
    else:
        if off_norm(work) > threshold:
            raise RuntimeError(
                f"Jacobi did not converge in {max_sweeps} sweeps (n={n})"
            )
    vals = np.diag(work).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], np.ascontiguousarray(vecs[:, order])


def sym_pow(a, power: float, eig_floor: float = 1e-8):
    """Symmetric matrix power via eigendecomposition.

    Eigenvalues are clamped from below to `eig_floor` before powering so
    that negative powers of near-singular covariances stay finite.
    """
    if power < 0 and eig_floor <= 0:
        raise ValueError("negative powers need a positive eig_floor")
    vals, vecs = sym_eig(a)
    powed = np.maximum(vals, eig_floor) ** power
    m = (vecs * powed) @ vecs.T
    return (m + m.T) * 0.5
