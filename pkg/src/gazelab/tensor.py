"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

The primitive set is closed and enumerated in ``DIFFERENTIABLE_PRIMITIVES``.
Everything downstream (scanpath model, losses, the LOOCV classifier) is built
from these ops, so a gradient check over the registry plus one end-to-end
check covers the whole training path.

Conventions
-----------
* All values are ``np.float64``; integer or float input is promoted on entry.
* Ops run eagerly. Under an active :class:`Tape` they also append nodes to
  the tape; outside a tape they are plain numpy calls and produce identical
  values.
* A tape is single-owner. Concurrent training requires independent tapes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not fit a primitive's contract."""


class DomainError(ValueError):
    """Raised when operand values leave a primitive's domain (e.g. log of <= 0)."""


_STATE = threading.local()


def _tape_stack() -> list:
    if not hasattr(_STATE, "stack"):
        _STATE.stack = []
    return _STATE.stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    """A float64 array plus an optional node id on the active tape."""

    __slots__ = ("data", "trainable", "node", "_tape_token")

    def __init__(self, data, trainable: bool = False):
        self.data = _as_array(data)
        self.trainable = trainable
        self.node = None
        self._tape_token = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), trainable=self.trainable)

    def __repr__(self) -> str:
        flag = ", trainable" if self.trainable else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Operator sugar; every branch lands in a registered primitive.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class _Node:
    op: str
    parents: tuple
    backward: Callable | None  # grad -> list of (parent id, contribution)


class Tape:
    """Append-only record of primitive applications for one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaves: dict[int, Tensor] = {}
        self._entered = False

    def __enter__(self) -> "Tape":
        if self._entered:
            raise RuntimeError("a Tape cannot be entered twice")
        self._entered = True
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def _leaf_id(self, t: Tensor) -> int:
        if t._tape_token is not self:
            t.node = None
            t._tape_token = self
        if t.node is None:
            t.node = len(self.nodes)
            self.nodes.append(_Node("leaf", (), None))
            if t.trainable:
                self._leaves[t.node] = t
        return t.node

    def _record(self, op: str, parent_ids: tuple, backward: Callable) -> int:
        nid = len(self.nodes)
        self.nodes.append(_Node(op, parent_ids, backward))
        return nid

    def gradients(self, root: Tensor) -> dict:
        """Backpropagate from a scalar root.

        Returns a mapping from trainable leaf Tensor to its gradient array.
        Leaves the loss never touched are absent from the map.
        """
        if root.node is None and root.trainable:
            self._leaf_id(root)
        if root.node is None or root._tape_token is not self:
            raise ValueError("root was not recorded on this tape")
        if root.data.size != 1:
            raise ValueError(f"backprop root must be scalar, got shape {root.data.shape}")
        grads: dict[int, np.ndarray] = {root.node: np.ones_like(root.data)}
        for nid in range(root.node, -1, -1):
            g = grads.pop(nid, None)
            if g is None:
                continue
            node = self.nodes[nid]
            if node.backward is None:
                grads[nid] = g  # keep leaf grads
                continue
            for pid, contrib in node.backward(g):
                if pid in grads:
                    grads[pid] = grads[pid] + contrib
                else:
                    grads[pid] = contrib
        return {t: grads[nid] for nid, t in self._leaves.items() if nid in grads}


def _trace(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward_builder) -> Tensor:
    """Wrap a primitive result; append a node when a tape is active.

    ``backward_builder`` is called only when recording, with the input node
    ids of the traced operands, and must return grad -> [(pid, contrib)].
    """
    result = Tensor(out)
    tape = _active_tape()
    if tape is None:
        return result
    parent_ids = []
    input_slots = []
    for pos, t in enumerate(inputs):
        if t.trainable or (t._tape_token is tape and t.node is not None):
            parent_ids.append(tape._leaf_id(t))
            input_slots.append(pos)
    if not parent_ids:
        return result
    backward = backward_builder(tuple(parent_ids), tuple(input_slots))
    result.node = tape._record(op, tuple(parent_ids), backward)
    result._tape_token = tape
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes introduced or stretched by numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = a.data + b.data

    def build(pids, slots):
        shapes = {0: a.data.shape, 1: b.data.shape}

        def backward(g):
            return [(pid, _unbroadcast(g, shapes[slot])) for pid, slot in zip(pids, slots)]

        return backward

    return _trace("add", out, (a, b), build)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    out = a.data - b.data

    def build(pids, slots):
        shapes = {0: a.data.shape, 1: b.data.shape}

        def backward(g):
            outs = []
            for pid, slot in zip(pids, slots):
                contrib = _unbroadcast(g if slot == 0 else -g, shapes[slot])
                outs.append((pid, contrib))
            return outs

        return backward

    return _trace("sub", out, (a, b), build)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    out = a.data * b.data

    def build(pids, slots):
        av, bv = a.data, b.data

        def backward(g):
            outs = []
            for pid, slot in zip(pids, slots):
                if slot == 0:
                    outs.append((pid, _unbroadcast(g * bv, av.shape)))
                else:
                    outs.append((pid, _unbroadcast(g * av, bv.shape)))
            return outs

        return backward

    return _trace("mul", out, (a, b), build)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a.data, b.data)
    if np.any(b.data == 0.0):
        raise DomainError("div: zero divisor")
    out = a.data / b.data

    def build(pids, slots):
        av, bv = a.data, b.data

        def backward(g):
            outs = []
            for pid, slot in zip(pids, slots):
                if slot == 0:
                    outs.append((pid, _unbroadcast(g / bv, av.shape)))
                else:
                    outs.append((pid, _unbroadcast(-g * av / (bv * bv), bv.shape)))
            return outs

        return backward

    return _trace("div", out, (a, b), build)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = -a.data

    def build(pids, slots):
        def backward(g):
            return [(pids[0], -g)]

        return backward

    return _trace("neg", out, (a,), build)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.data, b.data
    if av.ndim == 0 or bv.ndim == 0:
        raise ShapeError(f"matmul: operands must be at least 1-D, got {av.shape} and {bv.shape}")
    if av.ndim > 2 or bv.ndim > 2:
        raise ShapeError(f"matmul: operands must be at most 2-D, got {av.shape} and {bv.shape}")
    if av.shape[-1] != (bv.shape[0] if bv.ndim >= 1 else None):
        raise ShapeError(f"matmul: inner dimensions differ, {av.shape} @ {bv.shape}")
    out = av @ bv

    def build(pids, slots):
        a2 = av.reshape(1, -1) if av.ndim == 1 else av
        b2 = bv.reshape(-1, 1) if bv.ndim == 1 else bv

        def backward(g):
            g2 = g.reshape(a2.shape[0], b2.shape[1])
            outs = []
            for pid, slot in zip(pids, slots):
                if slot == 0:
                    ga = g2 @ b2.T
                    outs.append((pid, ga.reshape(av.shape)))
                else:
                    gb = a2.T @ g2
                    outs.append((pid, gb.reshape(bv.shape)))
            return outs

        return backward

    return _trace("matmul", out, (a, b), build)


def outer(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"outer: expects two 1-D operands, got {a.data.shape} and {b.data.shape}")
    out = np.outer(a.data, b.data)

    def build(pids, slots):
        av, bv = a.data, b.data

        def backward(g):
            outs = []
            for pid, slot in zip(pids, slots):
                if slot == 0:
                    outs.append((pid, g @ bv))
                else:
                    outs.append((pid, av @ g))
            return outs

        return backward

    return _trace("outer", out, (a, b), build)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expects a 2-D operand, got {a.data.shape}")
    out = a.data.T.copy()

    def build(pids, slots):
        def backward(g):
            return [(pids[0], g.T)]

        return backward

    return _trace("transpose", out, (a,), build)


# ---------------------------------------------------------------------------
# structure


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: needs at least one operand")
    nd = parts[0].data.ndim
    for p in parts:
        if p.data.ndim != nd:
            raise ShapeError(
                "concat: rank mismatch, " + " vs ".join(str(q.data.shape) for q in parts)
            )
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(
            "concat: shapes " + ", ".join(str(p.data.shape) for p in parts) + f" on axis {axis}"
        ) from exc

    def build(pids, slots):
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            outs = []
            for pid, slot in zip(pids, slots):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offsets[slot], offsets[slot + 1])
                outs.append((pid, g[tuple(sl)]))
            return outs

        return backward

    return _trace("concat", out, tuple(parts), build)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = as_tensor(a)
    extent = a.data.shape[axis]
    if start < 0 or start + length > extent:
        raise ShapeError(f"narrow: [{start}:{start + length}] outside axis {axis} of {a.data.shape}")
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    out = a.data[tuple(sl)].copy()

    def build(pids, slots):
        def backward(g):
            full = np.zeros_like(a.data)
            full[tuple(sl)] = g
            return [(pids[0], full)]

        return backward

    return _trace("narrow", out, (a,), build)


def split(a, sizes: Sequence[int], axis: int = 0) -> list:
    """Inverse of concat: consecutive narrows covering the whole axis."""
    a = as_tensor(a)
    if sum(sizes) != a.data.shape[axis]:
        raise ShapeError(f"split: sizes {list(sizes)} do not cover axis {axis} of {a.data.shape}")
    parts, start = [], 0
    for n in sizes:
        parts.append(narrow(a, axis, start, n))
        start += n
    return parts


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {a.data.shape} to {tuple(shape)}") from exc
    out = out.copy()

    def build(pids, slots):
        def backward(g):
            return [(pids[0], g.reshape(a.data.shape))]

        return backward

    return _trace("reshape", out, (a,), build)


def pick(a, index) -> Tensor:
    """Select one element; the scalar result keeps the graph connected."""
    a = as_tensor(a)
    idx = tuple(int(i) for i in index) if isinstance(index, (tuple, list)) else (int(index),)
    if len(idx) != a.data.ndim:
        raise ShapeError(f"pick: index {idx} does not address shape {a.data.shape}")
    out = np.asarray(a.data[idx])

    def build(pids, slots):
        def backward(g):
            full = np.zeros_like(a.data)
            full[idx] = g
            return [(pids[0], full)]

        return backward

    return _trace("pick", out, (a,), build)


# ---------------------------------------------------------------------------
# reductions


def mean(a, axis: int) -> Tensor:
    a = as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"mean: axis {axis} outside shape {a.data.shape}")
    axis = axis % a.data.ndim
    out = a.data.mean(axis=axis)

    def build(pids, slots):
        n = a.data.shape[axis]

        def backward(g):
            ge = np.expand_dims(g, axis)
            return [(pids[0], np.broadcast_to(ge / n, a.data.shape).copy())]

        return backward

    return _trace("mean", out, (a,), build)


def tsum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    if axis is not None and not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"sum: axis {axis} outside shape {a.data.shape}")
    out = a.data.sum(axis=axis)

    def build(pids, slots):
        def backward(g):
            if axis is None:
                return [(pids[0], np.broadcast_to(g, a.data.shape).copy())]
            ge = np.expand_dims(g, axis % a.data.ndim)
            return [(pids[0], np.broadcast_to(ge, a.data.shape).copy())]

        return backward

    return _trace("sum", out, (a,), build)


# ---------------------------------------------------------------------------
# nonlinearities


def softmax(a, axis: int = -1) -> Tensor:
    """Stable softmax along one axis; invariant to a constant shift."""
    a = as_tensor(a)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"softmax: axis {axis} outside shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def build(pids, slots):
        s = out

        def backward(g):
            dot = (g * s).sum(axis=axis, keepdims=True)
            return [(pids[0], (g - dot) * s)]

        return backward

    return _trace("softmax", out, (a,), build)


def _unary(op: str, a, fwd, bwd) -> Tensor:
    a = as_tensor(a)
    out = fwd(a.data)

    def build(pids, slots):
        def backward(g):
            return [(pids[0], bwd(g, a.data, out))]

        return backward

    return _trace(op, out, (a,), build)


def tanh(a) -> Tensor:
    return _unary("tanh", a, np.tanh, lambda g, x, y: g * (1.0 - y * y))


def relu(a) -> Tensor:
    return _unary("relu", a, lambda x: np.maximum(x, 0.0), lambda g, x, y: g * (x > 0.0))


def sigmoid(a) -> Tensor:
    def fwd(x):
        return 0.5 * (1.0 + np.tanh(0.5 * x))

    return _unary("sigmoid", a, fwd, lambda g, x, y: g * y * (1.0 - y))


def softplus(a) -> Tensor:
    return _unary(
        "softplus",
        a,
        lambda x: np.logaddexp(0.0, x),
        lambda g, x, y: g * (0.5 * (1.0 + np.tanh(0.5 * x))),
    )


def exp(a) -> Tensor:
    return _unary("exp", a, np.exp, lambda g, x, y: g * y)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: operand has entries <= 0")
    return _unary("log", a, np.log, lambda g, x, y: g / x)


# Closed set of differentiable primitives. Tests iterate over this registry,
# so extending the engine without extending the gradient check fails loudly.
DIFFERENTIABLE_PRIMITIVES: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "outer": outer,
    "transpose": transpose,
    "concat": concat,
    "narrow": narrow,
    "reshape": reshape,
    "pick": pick,
    "mean": mean,
    "sum": tsum,
    "softmax": softmax,
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "exp": exp,
    "log": log,
}


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative error and the overall verdict."""

    max_rel_err: dict = field(default_factory=dict)
    tol: float = 1e-4
    passed: bool = True

    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)


def grad_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare backprop gradients of ``f`` against central differences.

    ``f`` must be deterministic and rebuild its graph from the current
    parameter values on every call. Relative error uses the denominator
    max(|analytic|, |numeric|, 1), so the check stays meaningful where
    central differences bottom out in roundoff.
    """
    with Tape() as tape:
        loss = f()
    analytic = tape.gradients(loss)
    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        a = analytic.get(p)
        if a is None:
            a = np.zeros_like(p.data)
        worst = 0.0
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + eps
            up = float(f().data)
            p.data[idx] = orig - eps
            down = float(f().data)
            p.data[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            ai = float(a[idx])
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), 1.0)
            if err > worst:
                worst = err
        report.max_rel_err[name] = worst
        if worst > tol:
            report.passed = False
    return report
