"""Minimal reverse-mode differentiation kernel over float64 numpy arrays.

Every operation the policy and curiosity networks need is implemented here
with an explicit forward value and a backward closure. There is no general
graph compiler: nodes simply remember their parents, and ``backward`` walks
them in reverse topological order. All math is 64-bit so finite-difference
checks are reliable.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

CE_EPSILON = 1e-12
LOGPROB_FLOOR = 1e-12
DEFAULT_LEAKY_SLOPE = 0.01


class ShapeError(ValueError):
    """Raised when operand dimensions do not agree."""


_RECORDING = [True]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / reward paths)."""
    _RECORDING.append(False)
    try:
        yield
    finally:
        _RECORDING.pop()


def recording() -> bool:
    return _RECORDING[-1]


class Tensor:
    """A float64 array node. Leaves carry data only; op outputs carry parents
    and a backward closure while recording is enabled."""

    __slots__ = ("data", "parents", "backward_fn", "op")

    def __init__(self, data, parents=(), backward_fn=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        if _RECORDING[-1] and parents:
            self.parents = tuple(parents)
            self.backward_fn = backward_fn
        else:
            self.parents = ()
            self.backward_fn = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"


class Parameter(Tensor):
    """A named leaf tensor with a persistently accumulated gradient."""

    __slots__ = ("grad", "name")

    def __init__(self, value, name: str):
        super().__init__(value, op="param")
        self.grad = np.zeros_like(self.data)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def constant(x) -> Tensor:
    return Tensor(x)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# backward machinery


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, seed: float = 1.0) -> None:
    """Accumulate d(loss)/d(param) into every reachable Parameter's grad."""
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.full_like(loss.data, seed)}

    def accum(node: Tensor, g: np.ndarray) -> None:
        key = id(node)
        if key in grads:
            grads[key] = grads[key] + g
        else:
            grads[key] = g

    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g
            continue
        if node.backward_fn is not None:
            node.backward_fn(g, accum)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0


def gradients(loss: Tensor, params: Sequence[Parameter]) -> dict[str, np.ndarray]:
    """Zero the given params, backprop the loss, return copies of the grads."""
    zero_grads(params)
    backward(loss)
    return {p.name: p.grad.copy() for p in params}


# ---------------------------------------------------------------------------
# primitives


def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """W @ x (+ b) for a vector x and matrix W."""
    if W.data.ndim != 2 or x.data.ndim != 1:
        raise ShapeError(f"affine expects matrix and vector, got {W.shape} and {x.shape}")
    if W.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"affine inner dimensions differ: {W.shape} vs {x.shape}")
    out = W.data @ x.data
    if b is not None:
        if b.data.shape != out.shape:
            raise ShapeError(f"affine bias shape {b.shape} does not match output {out.shape}")
        out = out + b.data

    def bw(g, accum):
        accum(W, np.outer(g, x.data))
        accum(x, W.data.T @ g)
        if b is not None:
            accum(b, g)

    parents = (x, W) if b is None else (x, W, b)
    return Tensor(out, parents, bw, "affine")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")

    def bw(g, accum):
        accum(a, g)
        accum(b, g)

    return Tensor(a.data + b.data, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")

    def bw(g, accum):
        accum(a, g)
        accum(b, -g)

    return Tensor(a.data - b.data, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")

    def bw(g, accum):
        accum(a, g * b.data)
        accum(b, g * a.data)

    return Tensor(a.data * b.data, (a, b), bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g, accum):
        accum(a, g * c)

    return Tensor(a.data * c, (a,), bw, "scale")


def add_n(nodes: Sequence[Tensor]) -> Tensor:
    if not nodes:
        raise ValueError("add_n of empty sequence")
    out = nodes[0].data.copy()
    for n in nodes[1:]:
        if n.data.shape != out.shape:
            raise ShapeError("add_n operands must share a shape")
        out += n.data

    def bw(g, accum):
        for n in nodes:
            accum(n, g)

    return Tensor(out, tuple(nodes), bw, "add_n")


def concat(parts: Sequence[Tensor]) -> Tensor:
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError("concat expects 1-d operands")
    sizes = [p.data.shape[0] for p in parts]
    out = np.concatenate([p.data for p in parts])

    def bw(g, accum):
        off = 0
        for p, n in zip(parts, sizes):
            accum(p, g[off:off + n])
            off += n

    return Tensor(out, tuple(parts), bw, "concat")


def vslice(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError("vslice expects a vector")
    out = x.data[start:stop].copy()

    def bw(g, accum):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        accum(x, full)

    return Tensor(out, (x,), bw, "vslice")


def stack_scalars(nodes: Sequence[Tensor]) -> Tensor:
    out = np.array([float(n.data) for n in nodes])

    def bw(g, accum):
        for i, n in enumerate(nodes):
            accum(n, np.asarray(g[i]))

    return Tensor(out, tuple(nodes), bw, "stack")


def pick(x: Tensor, index: int) -> Tensor:
    if not 0 <= index < x.data.shape[0]:
        raise IndexError(f"pick index {index} out of range for {x.shape}")
    out = x.data[index]

    def bw(g, accum):
        full = np.zeros_like(x.data)
        full[index] = g
        accum(x, full)

    return Tensor(out, (x,), bw, "pick")


def take_row(W: Tensor, index: int) -> Tensor:
    """Row lookup, the one-hot-times-matrix product used for embeddings."""
    if W.data.ndim != 2:
        raise ShapeError("take_row expects a matrix")
    if not 0 <= index < W.data.shape[0]:
        raise IndexError(f"row {index} out of range for {W.shape}")
    out = W.data[index].copy()

    def bw(g, accum):
        full = np.zeros_like(W.data)
        full[index] = g
        accum(W, full)

    return Tensor(out, (W,), bw, "take_row")


def tanh_(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g, accum):
        accum(x, g * (1.0 - y * y))

    return Tensor(y, (x,), bw, "tanh")


def sigmoid_(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g, accum):
        accum(x, g * y * (1.0 - y))

    return Tensor(y, (x,), bw, "sigmoid")


def leaky_relu(x: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    y = x.data * factor

    def bw(g, accum):
        accum(x, g * factor)

    return Tensor(y, (x,), bw, "leaky_relu")


def nonlinearity(x: Tensor, kind: str, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    if kind == "tanh":
        return tanh_(x)
    if kind == "sigmoid":
        return sigmoid_(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    raise ValueError(f"unknown nonlinearity {kind!r}")


def softmax(x: Tensor) -> Tensor:
    """Stable softmax via max subtraction. Output sums to 1 and is positive."""
    if x.data.ndim != 1 or x.data.shape[0] < 1:
        raise ShapeError("softmax expects a non-empty vector")
    shifted = x.data - np.max(x.data)
    e = np.exp(shifted)
    y = e / e.sum()

    def bw(g, accum):
        accum(x, y * (g - float(np.dot(g, y))))

    return Tensor(y, (x,), bw, "softmax")


def dotp(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeError(f"dotp expects equal vectors, got {a.shape} and {b.shape}")
    out = np.dot(a.data, b.data)

    def bw(g, accum):
        accum(a, g * b.data)
        accum(b, g * a.data)

    return Tensor(out, (a, b), bw, "dot")


def sumsq(x: Tensor) -> Tensor:
    out = np.dot(x.data.ravel(), x.data.ravel())

    def bw(g, accum):
        accum(x, 2.0 * g * x.data)

    return Tensor(out, (x,), bw, "sumsq")


def attend(weights: Tensor, features: np.ndarray) -> Tensor:
    """Weighted sum of constant region features: features.T @ weights."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or weights.data.shape != (features.shape[0],):
        raise ShapeError(
            f"attend expects weights ({features.shape[0]},) for features {features.shape}"
        )
    out = features.T @ weights.data

    def bw(g, accum):
        accum(weights, features @ g)

    return Tensor(out, (weights,), bw, "attend")


def cross_entropy(dist: Tensor, target_index: int) -> Tensor:
    """-log(dist[target] + eps). When dist comes straight out of a softmax the
    backward pass is routed through it as (dist - onehot) on the logits."""
    if not 0 <= target_index < dist.data.shape[0]:
        raise IndexError(f"target {target_index} out of range for {dist.shape}")
    p = dist.data[target_index]
    out = -math.log(p + CE_EPSILON)

    if dist.op == "softmax" and dist.parents:
        logits = dist.parents[0]

        def bw(g, accum):
            delta = dist.data.copy()
            delta[target_index] -= 1.0
            accum(logits, g * delta)

        return Tensor(out, (logits,), bw, "cross_entropy")

    def bw_plain(g, accum):
        full = np.zeros_like(dist.data)
        full[target_index] = -g / (p + CE_EPSILON)
        accum(dist, full)

    return Tensor(out, (dist,), bw_plain, "cross_entropy")


def logprob(dist: Tensor, index: int) -> Tensor:
    """log dist[index], floored at LOGPROB_FLOOR so exp(result) <= 1."""
    if not 0 <= index < dist.data.shape[0]:
        raise IndexError(f"index {index} out of range for {dist.shape}")
    p = dist.data[index]
    out = math.log(max(p, LOGPROB_FLOOR))

    if dist.op == "softmax" and dist.parents:
        logits = dist.parents[0]

        def bw(g, accum):
            delta = -dist.data.copy()
            delta[index] += 1.0
            accum(logits, g * delta)

        return Tensor(out, (logits,), bw, "logprob")

    def bw_plain(g, accum):
        full = np.zeros_like(dist.data)
        full[index] = g / max(p, LOGPROB_FLOOR)
        accum(dist, full)

    return Tensor(out, (dist,), bw_plain, "logprob")


# ---------------------------------------------------------------------------
# LSTM cell


@dataclass
class LstmParams:
    """Gate weights for one LSTM cell. Gate order in the stacked arrays is
    input, forget, cell candidate, output."""

    W_x: Parameter  # (4Z, input)
    W_h: Parameter  # (4Z, Z)
    b: Parameter    # (4Z,)

    @property
    def hidden_size(self) -> int:
        return self.W_h.data.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.W_x, self.W_h, self.b]


def init_lstm(rng: np.random.Generator, name: str, input_size: int, hidden: int,
              bound: float = 0.08) -> LstmParams:
    return LstmParams(
        W_x=Parameter(rng.uniform(-bound, bound, (4 * hidden, input_size)), f"{name}.W_x"),
        W_h=Parameter(rng.uniform(-bound, bound, (4 * hidden, hidden)), f"{name}.W_h"),
        b=Parameter(np.zeros(4 * hidden), f"{name}.b"),
    )


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              params: LstmParams) -> tuple[Tensor, Tensor]:
    z = params.hidden_size
    gates = add(affine(x, params.W_x, params.b), affine(h_prev, params.W_h))
    i = sigmoid_(vslice(gates, 0, z))
    f = sigmoid_(vslice(gates, z, 2 * z))
    g = tanh_(vslice(gates, 2 * z, 3 * z))
    o = sigmoid_(vslice(gates, 3 * z, 4 * z))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh_(c))
    return h, c


# ---------------------------------------------------------------------------
# initialization helpers


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], name: str) -> Parameter:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-bound, bound, shape), name)


def zeros_param(shape: tuple[int, ...], name: str) -> Parameter:
    return Parameter(np.zeros(shape), name)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimState:
    """Learning-rate, clipping and (for the adaptive variant) moment slots."""

    learning_rate: float
    clip_norm: float | None = 5.0
    variant: str = "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    slots: dict = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip norm must be positive or None")
        if self.variant not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer variant {self.variant!r}")


def global_grad_norm(params: Iterable[Parameter]) -> float:
    total = 0.0
    for p in params:
        total += float(np.dot(p.grad.ravel(), p.grad.ravel()))
    return math.sqrt(total)


def sgd_step(params: Sequence[Parameter], opt: OptimState) -> None:
    """Clip the global gradient norm, then apply one descent step.

    Clipping rescales the stored grads in place; grads are otherwise left
    intact until zero_grads is called.
    """
    if opt.clip_norm is not None:
        norm = global_grad_norm(params)
        if norm > opt.clip_norm:
            factor = opt.clip_norm / norm
            for p in params:
                p.grad *= factor
    opt.step_count += 1
    if opt.variant == "sgd":
        for p in params:
            p.data -= opt.learning_rate * p.grad
        return
    # adaptive first/second-moment variant
    t = opt.step_count
    for p in params:
        slot = opt.slots.get(p.name)
        if slot is None:
            slot = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            opt.slots[p.name] = slot
        slot["m"] = opt.beta1 * slot["m"] + (1.0 - opt.beta1) * p.grad
        slot["v"] = opt.beta2 * slot["v"] + (1.0 - opt.beta2) * (p.grad * p.grad)
        m_hat = slot["m"] / (1.0 - opt.beta1 ** t)
        v_hat = slot["v"] / (1.0 - opt.beta2 ** t)
        p.data -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def grad_check(fn: Callable[[], Tensor], params: Sequence[Parameter],
               h: float = 1e-5, max_coords: int = 200, seed: int = 0,
               floor: float = 1e-2) -> float:
    """Compare analytic gradients of a deterministic scalar fn against central
    finite differences. Returns the max relative error over checked coords.

    The error for one coordinate is |analytic - numeric| / max(|analytic|,
    |numeric|, floor); with floor 1e-2 a 1e-4 threshold corresponds to an
    absolute floor of 1e-6. Tensors with more than max_coords entries are
    subsampled with a seeded RNG.
    """
    zero_grads(params)
    backward(fn())
    analytic = {p.name: p.grad.copy() for p in params}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        ga = analytic[p.name].reshape(-1)
        n = flat.size
        if n <= max_coords:
            coords = range(n)
        else:
            coords = sorted(rng.choice(n, size=max_coords, replace=False).tolist())
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                f_plus = float(fn().data)
                flat[i] = orig - h
                f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = ga[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if err > worst:
                worst = err
    zero_grads(params)
    return worst
