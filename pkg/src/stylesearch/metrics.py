"""Post-hoc quality and convergence metrics.

Three image-level scores and two history-level series:

* total-variation score, the mean absolute neighbour difference
  (anisotropic L1 discretization) scaled by 100 for readability;
* Gaussian feature statistics and the Frechet distance between them,
  a self-contained stand-in for FID built on the package's own
  perceptual extractor rather than an Inception network, so values
  are comparable only to each other, never to published FID numbers;
* per-index objective trajectories and Hamming-distance trajectories
  over a search history.

All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stylesearch.genome import Genome
from stylesearch.linalg import covariance, sym_pow
from stylesearch.search import best_record

TV_SCALE = 100.0


def tv_score(image) -> float:
    """Mean absolute forward difference between neighbouring pixels,
    over both axes and all channels, times 100.

    Accepts (C, H, W) with any C >= 1. Every horizontal and vertical
    neighbour pair counts once; an image with no neighbour pairs at all
    (1x1) is degenerate and rejected.
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("tv_score expects a (C, H, W) image")
    c, h, w = x.shape
    if c < 1:
        raise ValueError("tv_score needs at least one channel")
    pairs = c * (h * (w - 1) + (h - 1) * w)
    if pairs == 0:
        raise ValueError("tv_score needs at least one neighbour pair")
    total = np.abs(x[:, :, 1:] - x[:, :, :-1]).sum()
    total += np.abs(x[:, 1:, :] - x[:, :-1, :]).sum()
    return TV_SCALE * float(total) / pairs


@dataclass(frozen=True)
class GaussianStats:
    """Gaussian fit to a set of feature vectors."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def feature_stats(images, extractor) -> GaussianStats:
    """Gaussian statistics of a set of images in feature space.

    Each image maps to the spatial average of the extractor's stage-4
    feature map; mean and population covariance are taken over the set.
    """
    if len(images) < 2:
        raise ValueError("feature_stats needs at least 2 images")
    vectors = []
    for img in images:
        feats = extractor.forward(img)
        vectors.append(feats[3].mean(axis=(1, 2)))
    stacked = np.stack(vectors, axis=0)
    mean, cov = covariance(stacked.T)  # variables are feature dims
    return GaussianStats(mean=mean, cov=cov, count=len(images))


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared Frechet distance between two Gaussian fits.

    d^2 = |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2),
    the symmetric-product form, so only symmetric matrix roots appear.
    Tiny negative residue from rounding is clamped to zero.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = sym_pow(a.cov, 0.5, eig_floor=0.0)
    inner = root_a @ b.cov @ root_a
    inner = (inner + inner.T) / 2.0
    cross = sym_pow(inner, 0.5, eig_floor=0.0)
    d2 = float(diff @ diff) + float(
        np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    if d2 < 0.0:
        if d2 < -1e-6:
            raise RuntimeError(f"frechet distance residue {d2} is too negative")
        d2 = 0.0
    return d2


def hamming_trajectory(history, reference: Genome = None) -> list:
    """Hamming distance of every history genome to a reference genome
    (default: the history-wide best)."""
    if reference is None:
        reference = best_record(history).genome
    return [rec.genome.hamming(reference) for rec in history]


def objective_trajectories(history) -> list:
    """Aligned per-index series: (index, E, P, O, L, best-so-far L)."""
    rows = []
    best = float("inf")
    for rec in history:
        b = rec.breakdown
        best = min(best, b.L)
        rows.append((rec.index, b.E, b.P, b.O, b.L, best))
    return rows


def leading_trailing_means(values, fraction: float = 0.25):
    """Mean of the leading and trailing `fraction` of a series (at
    least one element each); used for convergence checks."""
    n = len(values)
    if n == 0:
        raise ValueError("empty series")
    k = max(1, int(n * fraction))
    head = float(np.mean(values[:k]))
    tail = float(np.mean(values[n - k:]))
    return head, tail
