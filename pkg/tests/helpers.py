"""Shared test utilities: finite-difference oracles and small fixtures."""

from __future__ import annotations

import hashlib
import time

import numpy as np

from stylesearch.config import ObjectiveConfig
from stylesearch.genome import Genome
from stylesearch.objective import ObjectiveBreakdown
from stylesearch.search import SearchRecord
from stylesearch.tensor import Tape, Tensor


class MockEvaluator:
    """Deterministic per-genome scores with no network in sight; an
    optional uneven delay shakes out thread interleavings."""

    def __init__(self, fail_mod=None, max_delay=0.0):
        self.fail_mod = fail_mod
        self.max_delay = max_delay
        self.oc = ObjectiveConfig()

    def evaluate(self, genome):
        digest = hashlib.sha256(genome.to_string().encode("ascii")).hexdigest()
        h = int(digest, 16)
        if self.max_delay:
            time.sleep(self.max_delay * ((h >> 40) % 7) / 7)
        failed = self.fail_mod is not None and h % self.fail_mod == 0
        e = (h % 10**6) / 10**6
        return ObjectiveBreakdown.build(e, 0.25, genome.operator_fraction,
                                        self.oc, failed=failed)


def make_record(index, genome, loss, gen):
    br = ObjectiveBreakdown(E=loss, P=0.0, O=0.0, L=loss, alpha=1.0,
                            beta=0.0, gamma=0.0)
    return SearchRecord(index=index, genome=genome, breakdown=br,
                        gen=gen, worker=0, seconds=0.0)


def genome_n(n):
    return Genome.from_string(format(n, "031b"))


def rel_err(a, b, eps: float = 1e-30) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    num = np.sqrt(((a - b) ** 2).sum())
    den = max(np.sqrt((a ** 2).sum()), np.sqrt((b ** 2).sum()), eps)
    return float(num / den)


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar-valued f() under in-place
    perturbation of x. Independent oracle for every autodiff check."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def autodiff_grads(build_loss, tensors):
    """Run one tape pass of build_loss() and return each tensor's grad."""
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = build_loss()
        tape.backward(loss)
    return [t.grad.copy() for t in tensors]


def check_op_grad(build_loss, tensors, tol: float = 1e-4,
                  h: float = 1e-6) -> float:
    """Compare tape gradients of a scalar loss against central
    differences for every tensor; returns the worst relative error."""
    grads = autodiff_grads(build_loss, tensors)
    worst = 0.0

    def value():
        # no active tape: pure forward evaluation
        return float(build_loss().data)

    for t, g in zip(tensors, grads):
        fd = numeric_grad(value, t.data, h=h)
        err = rel_err(g, fd)
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch {err} (tol {tol})"
    return worst
