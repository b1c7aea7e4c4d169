"""Eigensolver and matrix-function checks.

Reconstruction and orthonormality residuals are the primary oracles
(they need no reference implementation); numpy's eigvalsh serves as an
independent cross-check of eigenvalue sets.
"""

import numpy as np
import pytest

from stylesearch.linalg import covariance, off_norm, sym_eig, sym_pow

from helpers import rel_err


def _random_sym(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    return (a + a.T) / 2


def _random_psd(n, seed, jitter=0.0):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, n))
    return q @ q.T / n + jitter * np.eye(n)


@pytest.mark.parametrize("n", [2, 3, 8, 17, 33, 64])
def test_sym_eig_residuals(n):
    a = _random_sym(n, n)
    vals, vecs = sym_eig(a)
    recon = vecs @ np.diag(vals) @ vecs.T
    assert rel_err(recon, a) < 1e-9
    ortho = vecs.T @ vecs
    assert np.abs(ortho - np.eye(n)).max() < 1e-9


@pytest.mark.parametrize("n", [4, 16, 64])
def test_sym_eig_matches_reference_eigenvalues(n):
    a = _random_sym(n, 100 + n)
    vals, _ = sym_eig(a)
    ref = np.linalg.eigvalsh(a)[::-1]  # reference returns ascending
    assert np.allclose(vals, ref, rtol=1e-10, atol=1e-10)


def test_sym_eig_descending_order():
    vals, _ = sym_eig(_random_sym(12, 3))
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_sym_eig_diagonal_exact():
    d = np.diag([3.0, -1.0, 7.0])
    vals, vecs = sym_eig(d)
    assert vals.tolist() == [7.0, 3.0, -1.0]
    assert np.allclose(np.abs(vecs), np.eye(3)[:, [2, 0, 1]])


def test_sym_eig_rejects_nonsymmetric():
    a = np.arange(9.0).reshape(3, 3)
    with pytest.raises(ValueError):
        sym_eig(a)
    with pytest.raises(ValueError):
        sym_eig(np.ones((2, 3)))


def test_sym_pow_identity_and_root():
    a = _random_psd(6, 0, jitter=0.5)
    assert rel_err(sym_pow(a, 1.0), a) < 1e-12
    root = sym_pow(a, 0.5)
    assert rel_err(root @ root, a) < 1e-10
    assert np.allclose(root, root.T)


def test_sym_pow_inverse_against_reference():
    a = _random_psd(5, 1, jitter=1.0)
    inv = sym_pow(a, -1.0)
    assert rel_err(inv, np.linalg.inv(a)) < 1e-10


def test_sym_pow_floors_small_eigenvalues():
    # one eigenvalue at -1e-12: must clamp to the floor, not produce nan
    q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(4, 4)))
    a = q @ np.diag([2.0, 1.0, 0.5, -1e-12]) @ q.T
    root = sym_pow((a + a.T) / 2, 0.5, eig_floor=1e-8)
    assert np.isfinite(root).all()


def test_sym_pow_negative_power_needs_floor():
    a = np.eye(3)
    with pytest.raises(ValueError):
        sym_pow(a, -0.5, eig_floor=0.0)
    assert np.allclose(sym_pow(a, -0.5, eig_floor=1e-8), np.eye(3))


def test_covariance_matches_reference():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(4, 50))
    mean, cov = covariance(f)
    assert np.allclose(mean, f.mean(axis=1))
    assert np.allclose(cov, np.cov(f, bias=True))
    assert np.allclose(cov, cov.T)


def test_covariance_validation():
    with pytest.raises(ValueError):
        covariance(np.ones((3, 4, 5)))
    with pytest.raises(ValueError):
        covariance(np.ones((3, 0)))


def test_off_norm_hand_value():
    a = np.array([[1.0, 2.0], [2.0, 5.0]])
    assert abs(off_norm(a) - np.sqrt(8.0)) < 1e-15
    assert off_norm(np.diag([4.0, 9.0])) == 0.0
