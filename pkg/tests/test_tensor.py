"""Autodiff engine checks against central finite differences.

Every operator's tape gradient is compared to an independently computed
numeric derivative; no expected gradient value is hard-coded anywhere.
ReLU inputs are kept away from the kink so the numeric oracle is valid.
"""

import numpy as np
import pytest

from stylesearch.tensor import (
    Adam,
    Tape,
    Tensor,
    active_tape,
    add,
    concat,
    conv2d,
    instance_norm,
    mse_loss,
    relu,
    split_channels,
    tsum,
    upsample_nearest,
)

from helpers import check_op_grad, rel_err

SEEDS = range(20)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    x = x + np.sign(x) * margin
    x[x == 0] = margin
    return x


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d_grad(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 4, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.5, requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    t = rng.normal(size=(3, 4, 5))

    def loss():
        return mse_loss(conv2d(x, w, b), Tensor(t))

    check_op_grad(loss, [x, w, b], tol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_grad(seed):
    rng = np.random.default_rng(seed + 1000)
    x = Tensor(_away_from_zero(rng, (3, 5, 4)), requires_grad=True)
    t = rng.normal(size=(3, 5, 4))

    def loss():
        return mse_loss(relu(x), Tensor(t))

    check_op_grad(loss, [x], tol=1e-4)


def test_relu_subgradient_at_zero():
    x = Tensor(np.array([[[-1.0, 0.0, 2.0]]]), requires_grad=True)
    with Tape() as tape:
        tape.backward(tsum(relu(x)))
    assert x.grad.tolist() == [[[0.0, 0.0, 1.0]]]


@pytest.mark.parametrize("seed", SEEDS)
def test_upsample_grad(seed):
    rng = np.random.default_rng(seed + 2000)
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    t = rng.normal(size=(2, 6, 8))

    def loss():
        return mse_loss(upsample_nearest(x, 2), Tensor(t))

    check_op_grad(loss, [x], tol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_instance_norm_grad(seed):
    rng = np.random.default_rng(seed + 3000)
    x = Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True)
    t = rng.normal(size=(3, 4, 4))

    def loss():
        return mse_loss(instance_norm(x), Tensor(t))

    check_op_grad(loss, [x], tol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_concat_split_grad(seed):
    rng = np.random.default_rng(seed + 4000)
    a = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 3, 3)), requires_grad=True)
    t = rng.normal(size=(4, 3, 3))

    def loss():
        joined = concat(a, b)
        _, second = split_channels(joined, (2, 4))
        return mse_loss(second, Tensor(t))

    check_op_grad(loss, [a, b], tol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_add_tsum_mse_grad(seed):
    rng = np.random.default_rng(seed + 5000)
    a = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True)
    t = rng.normal(size=(2, 4, 4))

    def loss():
        return add(mse_loss(add(a, b), Tensor(t)), tsum(a))

    check_op_grad(loss, [a, b], tol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_composite_chain_grad(seed):
    """Conv -> relu -> upsample -> norm -> conv, the decoder's spine."""
    rng = np.random.default_rng(seed + 6000)
    x = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
    w1 = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.4, requires_grad=True)
    b1 = Tensor(rng.normal(size=3) * 0.1, requires_grad=True)
    w2 = Tensor(rng.normal(size=(2, 3, 3, 3)) * 0.4, requires_grad=True)
    b2 = Tensor(rng.normal(size=2) * 0.1, requires_grad=True)
    t = rng.normal(size=(2, 6, 6))

    def loss():
        h = relu(conv2d(x, w1, b1))
        h = instance_norm(upsample_nearest(h, 2))
        return mse_loss(conv2d(h, w2, b2), Tensor(t))

    check_op_grad(loss, [x, w1, b1, w2, b2], tol=1e-4)


def test_aliased_input_gradients_do_not_collide():
    # z = x + x must give dz/dx = 2, not a shared buffer counted once
    x = Tensor(np.ones((2, 2, 2)) * 3.0, requires_grad=True)
    with Tape() as tape:
        tape.backward(tsum(add(x, x)))
    assert np.array_equal(x.grad, np.full((2, 2, 2), 2.0))

    y = Tensor(np.full((1, 2, 2), 1.5), requires_grad=True)
    with Tape() as tape:
        tape.backward(tsum(add(y, relu(y))))
    assert np.array_equal(y.grad, np.full((1, 2, 2), 2.0))


def test_grad_accumulates_across_uses():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)

    def loss():
        joined = concat(x, x)
        return mse_loss(joined, Tensor(np.zeros((4, 3, 3))))

    check_op_grad(loss, [x], tol=1e-4)


def test_no_tape_no_recording():
    assert active_tape() is None
    x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
    out = relu(x)
    assert not out.requires_grad
    with Tape() as tape:
        assert active_tape() is tape
        out2 = relu(x)
        assert out2.requires_grad
    assert active_tape() is None


def test_backward_requires_scalar():
    x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
    with Tape() as tape:
        y = relu(x)
        with pytest.raises(ValueError):
            tape.backward(y)


def test_conv2d_input_validation():
    x = Tensor(np.ones((2, 4, 4)))
    w_even = Tensor(np.ones((3, 2, 2, 2)))
    with pytest.raises(ValueError):
        conv2d(x, w_even, Tensor(np.ones(3)))
    w_mismatch = Tensor(np.ones((3, 5, 3, 3)))
    with pytest.raises(ValueError):
        conv2d(x, w_mismatch, Tensor(np.ones(3)))
    w = Tensor(np.ones((3, 2, 3, 3)))
    with pytest.raises(ValueError):
        conv2d(x, w, Tensor(np.ones(4)))


def test_concat_spatial_mismatch():
    with pytest.raises(ValueError):
        concat(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 4, 3))))


def test_adam_first_step_closed_form():
    # with constant gradient g the first update is -lr * g / (|g| + eps)
    g = np.array([0.3, -2.0, 0.0001])
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p], lr=0.05)
    p.grad = g.copy()
    opt.step()
    expected = -0.05 * g / (np.abs(g) + 1e-8)
    assert rel_err(p.data, expected) < 1e-12


def test_adam_drives_quadratic_to_zero():
    rng = np.random.default_rng(11)
    p = Tensor(rng.normal(size=(4,)), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(600):
        opt.zero_grad()
        with Tape() as tape:
            loss = mse_loss(p, Tensor(np.zeros(4)))
            tape.backward(loss)
        opt.step()
    assert np.abs(p.data).max() < 1e-4


def test_adam_missing_grad_errors():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p])
    with pytest.raises(ValueError):
        opt.step()
