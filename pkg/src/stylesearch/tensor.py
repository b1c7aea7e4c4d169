"""Minimal dense float64 tensors with reverse-mode gradients.

Just enough machinery to train genome-decoded decoders for image
reconstruction: CHW convolution, ReLU, nearest upsampling, instance
normalization, channel concat/split, elementwise add, sum and MSE, plus
an Adam optimizer. Ops record onto the innermost active `Tape`; call
`tape.backward(loss)` to fill `.grad` on every reachable tensor that
requires gradients.

Tensors and tapes are single-threaded values: each worker owns its own.
"""

from __future__ import annotations

import threading

import numpy as np

from stylesearch import kernels


class Tensor:
    """N-d float64 array, optionally participating in gradient taping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        # ascontiguousarray would promote 0-d to 1-d, which breaks scalar
        # losses; asarray keeps rank and 0-d arrays are always contiguous.
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad})"


class Node:
    """One recorded op: inputs, output, and the local backward rule."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape():
    """The innermost recording tape of this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of ops, in execution (hence topological) order."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.last_visit_count = 0

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(tensor) into `.grad` of every recorded
        tensor with requires_grad, visiting each node exactly once."""
        if loss.data.ndim != 0:
            raise ValueError("backward requires a scalar loss")
        seed = np.ones((), dtype=np.float64)
        grads: dict[int, np.ndarray] = {id(loss): seed}
        # Each dict value must be exclusively owned so in-place accumulation
        # can't corrupt another tensor's gradient. Ops may hand back views,
        # read-only broadcasts, or the same array twice (add), so copy on
        # any store that would alias an already-stored array.
        owned = {id(seed)}
        visits = 0
        for node in reversed(self.nodes):
            visits += 1
            gout = grads.get(id(node.output))
            if gout is None:
                continue
            gins = node.backward_fn(gout)
            for tin, gin in zip(node.inputs, gins):
                if gin is None or not tin.requires_grad:
                    continue
                acc = grads.get(id(tin))
                if acc is None:
                    if gin.base is not None or id(gin) in owned:
                        gin = gin.copy()
                    grads[id(tin)] = gin
                    owned.add(id(gin))
                else:
                    acc += gin
        self.last_visit_count = visits
        for node in self.nodes:
            for t in node.inputs + (node.output,):
                if t.requires_grad and id(t) in grads:
                    t.accumulate_grad(grads.pop(id(t)))


def _record(op, inputs, out_data, backward_fn) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append(Node(op, tuple(inputs), out, backward_fn))
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: int | None = None) -> Tensor:
    """Same-size 2-D cross-correlation: [C,H,W] x [O,C,k,k] -> [O,H,W]."""
    if x.data.ndim != 3 or weight.data.ndim != 4:
        raise ValueError("conv2d expects CHW input and OCkk weight")
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ValueError("conv2d kernel must be square with odd size")
    if x.shape[0] != c_in:
        raise ValueError(
            f"channel mismatch: input has {x.shape[0]} channels, weight expects {c_in}"
        )
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError("conv2d input has zero-sized spatial dims")
    if bias.shape != (c_out,):
        raise ValueError("conv2d bias must be 1-d with one entry per output channel")
    if padding is None:
        padding = (k - 1) // 2
    if padding != (k - 1) // 2:
        raise ValueError("conv2d only supports same-size padding (k-1)/2")
    out = kernels.conv2d_forward(x.data, weight.data, bias.data, padding)
    xd, wd = x.data, weight.data

    def bwd(g):
        gx, gw, gb = kernels.conv2d_backward(xd, wd, np.ascontiguousarray(g), padding)
        return gx, gw, gb

    return _record("conv2d", (x, weight, bias), out, bwd)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    mask = x.data > 0

    def bwd(g):
        return (g * mask,)

    return _record("relu", (x,), np.where(mask, x.data, 0.0), bwd)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel of a CHW tensor into a factor x factor block."""
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if x.data.ndim != 3:
        raise ValueError("upsample_nearest expects CHW input")
    if factor == 1:
        out = x.data.copy()

        def bwd_id(g):
            return (g,)

        return _record("upsample", (x,), out, bwd_id)
    out = kernels.upsample_forward(x.data, factor)

    def bwd(g):
        return (kernels.upsample_backward(np.ascontiguousarray(g), factor),)

    return _record("upsample", (x,), out, bwd)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel (x - mean) / sqrt(var + eps) over spatial dims; no affine."""
    if x.data.ndim != 3:
        raise ValueError("instance_norm expects CHW input")
    mean = x.data.mean(axis=(1, 2), keepdims=True)
    var = x.data.var(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = (x.data - mean) * inv_std

    def bwd(g):
        gm = g.mean(axis=(1, 2), keepdims=True)
        gym = (g * y).mean(axis=(1, 2), keepdims=True)
        return ((g - gm - y * gym) * inv_std,)

    return _record("instance_norm", (x,), y, bwd)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Stack two CHW tensors along the channel axis."""
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ValueError("concat expects CHW inputs")
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(
            f"spatial mismatch: {a.shape[1:]} vs {b.shape[1:]} in concat"
        )
    c1 = a.shape[0]

    def bwd(g):
        return g[:c1].copy(), g[c1:].copy()

    return _record("concat", (a, b), np.concatenate([a.data, b.data], axis=0), bwd)


def split_channels(x: Tensor, sizes) -> tuple[Tensor, ...]:
    """Split a CHW tensor into channel blocks of the given sizes."""
    if sum(sizes) != x.shape[0]:
        raise ValueError("split sizes must sum to the channel count")
    outs = []
    start = 0
    for c in sizes:
        lo = start
        start += c

        def bwd(g, lo=lo, c=c):
            full = np.zeros_like(x.data)
            full[lo:lo + c] = g
            return (full,)

        outs.append(_record("split", (x,), x.data[lo:lo + c].copy(), bwd))
    return tuple(outs)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in add: {a.shape} vs {b.shape}")

    def bwd(g):
        return g, g

    return _record("add", (a, b), a.data + b.data, bwd)


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""

    def bwd(g):
        return (np.broadcast_to(g, x.shape),)

    return _record("sum", (x,), np.asarray(x.data.sum()), bwd)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared difference, as a scalar tensor."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch in mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def bwd(g):
        gd = (2.0 / n) * diff * g
        return gd, -gd

    return _record("mse", (pred, target), np.asarray(np.mean(diff * diff)), bwd)


class Adam:
    """Adam with bias correction over a fixed parameter list."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise ValueError("missing grad: call backward before Adam.step")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
