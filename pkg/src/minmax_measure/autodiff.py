"""Small reverse-mode autodiff over dense float64 arrays.

The tape is eager: every op computes its output when it is recorded, and
:func:`backward` walks the recorded nodes once in reverse order.  Gradients
with respect to a network input are built as an explicit subgraph
(:func:`input_gradient_graph`), so a later backward pass can differentiate
functions of that input gradient with respect to the weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when the inputs of a node have incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """Raised when a backward pass produces NaN/inf; carries the first bad node."""

    def __init__(self, message: str, node: "Node | None" = None):
        super().__init__(message)
        self.node = node


class Parameter:
    """A trainable array with a gradient accumulator of the same shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, value, name: str = ""):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Node:
    __slots__ = ("tape", "index", "op", "value", "parents", "grad_fn",
                 "requires_grad", "grad", "param")

    def __init__(self, tape, op, value, parents=(), grad_fn=None, requires_grad=False,
                 param=None):
        self.tape = tape
        self.op = op
        self.value = value
        self.parents = tuple(parents)
        self.grad_fn = grad_fn
        self.requires_grad = requires_grad
        self.grad = None
        self.param = param
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(#{self.index} {self.op}, shape={self.value.shape})"

    # operator sugar, all of it routed through the tape
    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __getitem__(self, index):
        return self.tape.slice(self, index)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(tape, op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"node #{len(tape.nodes)} ({op}): cannot broadcast {a.shape} with {b.shape}"
        ) from None


class Tape:
    """Append-only record of primitive operations."""

    def __init__(self):
        self.nodes: list[Node] = []

    # leaves ---------------------------------------------------------------
    def constant(self, value) -> Node:
        return Node(self, "const", np.asarray(value, dtype=np.float64))

    def param(self, p: Parameter, trainable: bool = True) -> Node:
        return Node(self, "param", p.value, requires_grad=trainable, param=p if trainable else None)

    def _lift(self, x) -> Node:
        return x if isinstance(x, Node) else self.constant(x)

    def _record(self, op, value, parents, grad_fn) -> Node:
        rg = any(p.requires_grad for p in parents)
        return Node(self, op, value, parents, grad_fn if rg else None, rg)

    # elementwise ------------------------------------------------------------
    def add(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        _broadcast_shape(self, "add", a, b)
        sa, sb = a.shape, b.shape
        return self._record("add", a.value + b.value, (a, b),
                            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        _broadcast_shape(self, "sub", a, b)
        sa, sb = a.shape, b.shape
        return self._record("sub", a.value - b.value, (a, b),
                            lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def mul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        _broadcast_shape(self, "mul", a, b)
        va, vb = a.value, b.value
        return self._record("mul", va * vb, (a, b),
                            lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)))

    def scale(self, a: Node, c: float) -> Node:
        return self._record("scale", a.value * c, (a,), lambda g: (g * c,))

    def relu(self, a: Node) -> Node:
        va = a.value
        return self._record("relu", np.maximum(va, 0.0), (a,), lambda g: (g * (va > 0),))

    def pos(self, a: Node) -> Node:
        """Positive part; same map as relu, kept separate for readable traces."""
        va = a.value
        return self._record("pos", np.maximum(va, 0.0), (a,), lambda g: (g * (va > 0),))

    def step(self, a: Node) -> Node:
        """Derivative of relu as a value; piecewise constant so it carries no gradient."""
        return self.constant((a.value > 0).astype(np.float64))

    def tanh(self, a: Node) -> Node:
        out = np.tanh(a.value)
        return self._record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))

    def square(self, a: Node) -> Node:
        va = a.value
        return self._record("square", va * va, (a,), lambda g: (2.0 * g * va,))

    def clamp(self, a: Node, lo, hi) -> Node:
        """Coordinatewise projection onto [lo, hi]; identity gradient inside, zero outside."""
        va = a.value
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        inside = (va >= lo) & (va <= hi)
        return self._record("clamp", np.clip(va, lo, hi), (a,), lambda g: (g * inside,))

    # linear algebra ------------------------------------------------------------
    def matmul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"node #{len(self.nodes)} (matmul): {a.shape} @ {b.shape}")
        va, vb = a.value, b.value
        ra, rb = a.requires_grad, b.requires_grad
        return self._record("matmul", va @ vb, (a, b),
                            lambda g: (g @ vb.T if ra else None, va.T @ g if rb else None))

    def affine(self, x, W, b) -> Node:
        """Batched affine map ``x @ W.T + b`` with W of shape (out, in)."""
        x, W, b = self._lift(x), self._lift(W), self._lift(b)
        if x.value.ndim != 2 or W.value.ndim != 2 or x.shape[1] != W.shape[1] \
                or b.shape != (W.shape[0],):
            raise ShapeError(
                f"node #{len(self.nodes)} (affine): x{x.shape}, W{W.shape}, b{b.shape}")
        vx, vW = x.value, W.value
        # rank-one products are much faster as broadcasts than through BLAS
        out = vx * vW[:, 0] if vW.shape[1] == 1 else vx @ vW.T
        out += b.value

        rx, rW, rb = x.requires_grad, W.requires_grad, b.requires_grad

        def grad_fn(g):
            gx = None
            if rx:
                gx = g * vW[0] if vW.shape[0] == 1 else g @ vW
            return (gx, g.T @ vx if rW else None, g.sum(axis=0) if rb else None)

        return self._record("affine", out, (x, W, b), grad_fn)

    # reductions --------------------------------------------------------------
    def sum(self, a: Node, axis: int | None = None) -> Node:
        shape = a.shape
        if axis is None:
            return self._record("sum", np.asarray(a.value.sum()), (a,),
                                lambda g: (np.broadcast_to(g, shape).copy(),))
        return self._record("sum", a.value.sum(axis=axis), (a,),
                            lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))

    def mean(self, a: Node, axis: int | None = None) -> Node:
        shape = a.shape
        if axis is None:
            n = a.value.size
            return self._record("mean", np.asarray(a.value.mean()), (a,),
                                lambda g: (np.full(shape, g / n),))
        n = shape[axis]
        return self._record("mean", a.value.mean(axis=axis), (a,),
                            lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape) / n,))

    def norm(self, a: Node) -> Node:
        """Euclidean norm along the last axis; gradient at the origin is taken as 0."""
        va = a.value
        out = np.sqrt((va * va).sum(axis=-1))
        safe = np.where(out > 0, out, 1.0)

        def grad_fn(g):
            return (np.expand_dims(g / safe * (out > 0), -1) * va,)

        return self._record("norm", out, (a,), grad_fn)

    # structure ---------------------------------------------------------------
    def broadcast(self, a: Node, shape) -> Node:
        sa = a.shape
        try:
            out = np.broadcast_to(a.value, shape)
        except ValueError:
            raise ShapeError(f"node #{len(self.nodes)} (broadcast): {sa} -> {shape}") from None
        return self._record("broadcast", out, (a,), lambda g: (_unbroadcast(g, sa),))

    def slice(self, a: Node, index) -> Node:
        shape = a.shape
        out = a.value[index]

        def grad_fn(g):
            full = np.zeros(shape)
            full[index] = g
            return (full,)

        return self._record("slice", out, (a,), grad_fn)

    def concat(self, parts: Sequence[Node], axis: int = -1) -> Node:
        parts = [self._lift(p) for p in parts]
        try:
            out = np.concatenate([p.value for p in parts], axis=axis)
        except ValueError:
            raise ShapeError(
                f"node #{len(self.nodes)} (concat): {[p.shape for p in parts]}") from None
        splits = np.cumsum([p.shape[axis] for p in parts])[:-1]
        return self._record("concat", out, parts, lambda g: tuple(np.split(g, splits, axis=axis)))

    def scatter_rows(self, parts: Sequence[Node], rows: Sequence[np.ndarray], n: int) -> Node:
        """Assemble an (n, k) node whose rows ``rows[i]`` come from ``parts[i]``."""
        k = parts[0].shape[1]
        out = np.empty((n, k))
        for p, r in zip(parts, rows):
            out[r] = p.value
        return self._record("scatter_rows", out, parts,
                            lambda g: tuple(g[r] for r in rows))

    def forward(self, roots: Sequence[Node]) -> list[np.ndarray]:
        """Values of ``roots``; the tape is eager so these are already materialized."""
        for r in roots:
            if r.tape is not self:
                raise ValueError(f"{r!r} belongs to another tape")
        return [r.value for r in roots]


def backward(tape: Tape, loss: Node) -> dict[Parameter, np.ndarray]:
    """Reverse pass from a scalar ``loss``; fills and returns each Parameter's gradient."""
    if loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.value).all():
        raise NonFiniteError(f"loss is not finite ({float(loss.value)})", loss)
    for node in tape.nodes:
        node.grad = None
        if node.param is not None:
            node.param.zero_grad()
    loss.grad = np.ones_like(loss.value)
    grads: dict[Parameter, np.ndarray] = {}
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = node.grad
        if g is None:
            continue
        if node.param is not None:
            acc = grads.get(node.param)
            grads[node.param] = g if acc is None else acc + g
            continue
        if node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
    bad = [p for p, g in grads.items() if not np.isfinite(g).all()]
    if bad:
        raise NonFiniteError(f"non-finite gradient reached {bad[0]!r}", _first_bad_node(tape, loss))
    for p, g in grads.items():
        p.grad = np.array(g, dtype=np.float64)
    return grads


def _first_bad_node(tape, loss):
    for node in tape.nodes[: loss.index + 1]:
        if not np.isfinite(node.value).all():
            return node
    for node in reversed(tape.nodes[: loss.index + 1]):
        if node.grad is not None and not np.isfinite(node.grad).all():
            return node
    return None


# feed-forward stacks ----------------------------------------------------------

_ACTIVATIONS = ("relu", "tanh")


def mlp_graph(tape: Tape, x: Node, layers: Sequence[tuple[Node, Node]], activation: str):
    """Forward pass of an affine/activation stack; returns (output, hidden activations)."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unsupported activation {activation!r}")
    act = tape.relu if activation == "relu" else tape.tanh
    hidden = []
    h = x
    for W, b in layers[:-1]:
        z = tape.affine(h, W, b)
        h = act(z)
        hidden.append((z, h))
    W, b = layers[-1]
    return tape.affine(h, W, b), hidden


def input_gradient_graph(tape: Tape, x: Node, layers: Sequence[tuple[Node, Node]],
                         activation: str):
    """Output and input-gradient nodes of a scalar-output MLP.

    The gradient is assembled from tape primitives by the layerwise chain rule,
    g <- (g * act'(z_l)) @ W_l, so it can itself be differentiated in the weights.
    Returns ``(h(x), grad_x h(x))`` with shapes (n, 1) and (n, d_in).
    """
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unsupported layer kind {activation!r}")
    out, hidden = mlp_graph(tape, x, layers, activation)
    W_last = layers[-1][0]
    if W_last.shape[0] != 1:
        raise ShapeError("input_gradient_graph needs a scalar-output network")
    n = x.shape[0]
    if not hidden:
        return out, tape.broadcast(W_last, (n, W_last.shape[1]))
    g = tape.broadcast(W_last, (n, W_last.shape[1]))
    for (W, _), (z, h) in zip(reversed(layers[:-1]), reversed(hidden)):
        if activation == "relu":
            g = tape.mul(g, tape.step(z))
        else:
            g = tape.mul(g, tape.sub(1.0, tape.square(h)))
        g = tape.matmul(g, W)
    return out, g


# optimizer --------------------------------------------------------------------

@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-5
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-9


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Parameter]) -> "AdamState":
        return cls([np.zeros_like(p.value) for p in params],
                   [np.zeros_like(p.value) for p in params], 0)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t)


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], state: AdamState,
              hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam descent step, applied in place; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params, grads and state have different lengths")
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.value.shape:
            raise ShapeError(f"adam_step: grad {g.shape} vs {p.name} {p.value.shape}")
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return params, state


# helpers that accept either numpy arrays or tape nodes -----------------------

def pos(x):
    return x.tape.pos(x) if isinstance(x, Node) else np.maximum(x, 0.0)


def square(x):
    return x.tape.square(x) if isinstance(x, Node) else x * x


def tanh(x):
    return x.tape.tanh(x) if isinstance(x, Node) else np.tanh(x)


def rowsum(x):
    return x.tape.sum(x, axis=1) if isinstance(x, Node) else x.sum(axis=1)


def column(x, i: int):
    """Column ``i`` of a 2-D batch, as a 1-D vector."""
    return x[:, i]
