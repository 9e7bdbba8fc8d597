"""Reverse-mode differentiation over dense float64 numpy arrays.

Every primitive records its parents and a vector-Jacobian product written in
terms of other primitives, so a backward pass run with ``create_graph=True``
is itself differentiable. That is what makes the exact (second-order) meta
gradient through an unrolled inner loop possible.

Two ways to drive it:

* ``grad(output, inputs)`` works on live ``Tensor`` graphs;
* ``eval_with_tape(f, params)`` records a ``Tape`` of primitives which can be
  replayed bit-for-bit and differentiated with ``gradient(tape)``.
"""

from __future__ import annotations

import os
import threading
from collections.abc import Callable, Iterator, Mapping
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "TapeError",
    "DivergenceError",
    "Tensor",
    "ParamSet",
    "GradSet",
    "Tape",
    "as_tensor",
    "no_grad",
    "grad",
    "eval_with_tape",
    "gradient",
    "gradient_through_adaptation",
    "finite_difference_gradient",
    "relative_error",
    "set_deterministic",
    "is_deterministic",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for a primitive."""

    def __init__(self, primitive: str, *shapes: tuple[int, ...]):
        self.primitive = primitive
        self.shapes = shapes
        desc = ", ".join(str(s) for s in shapes)
        super().__init__(f"{primitive}: incompatible operand shapes {desc}")


class NonFiniteError(FloatingPointError):
    """A primitive produced inf or nan."""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"{primitive}: non-finite intermediate value")


class TapeError(RuntimeError):
    """Replaying a tape did not reproduce the recorded values."""


class DivergenceError(FloatingPointError):
    """Parameters or losses became non-finite during an update."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


# --------------------------------------------------------------------------
# global switches

_local = threading.local()
_deterministic = os.environ.get("STH_DETERMINISTIC", "") == "1"


def set_deterministic(flag: bool) -> None:
    """Disable dropout and force sequential reduction everywhere."""
    global _deterministic
    _deterministic = bool(flag)


def is_deterministic() -> bool:
    return _deterministic


def _grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


def _active_tape() -> Tape | None:
    return getattr(_local, "tape", None)


@contextmanager
def _grad_mode(enabled: bool) -> Iterator[None]:
    prev = _grad_enabled()
    _local.grad_enabled = enabled
    try:
        yield
    finally:
        _local.grad_enabled = prev


def no_grad():
    """Context manager: ops inside build no graph."""
    return _grad_mode(False)


# --------------------------------------------------------------------------
# Tensor


class Tensor:
    """A float64 array node in the computation graph."""

    __slots__ = ("data", "requires_grad", "parents", "vjp", "op", "name")
    __array_priority__ = 100.0

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self.vjp: Callable | None = None
        self.op: str | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad" if self.requires_grad else ""
        return f"Tensor({self.data!r}{rg})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, fn: Callable, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    with np.errstate(all="ignore"):
        out = Tensor(fn(*(p.data for p in parents)))
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError(op)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.vjp = vjp
        out.op = op
    tape = _active_tape()
    if tape is not None:
        tape._append(op, fn, parents, out)
    return out


def _sum_to(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    axes = list(range(lead))
    axes += [lead + i for i, n in enumerate(shape) if n == 1 and g.shape[lead + i] != 1]
    out = sum_(g, tuple(axes), keepdims=True) if axes else g
    return reshape(out, shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _record("add", np.add, (a, b), lambda g, out: (_sum_to(g, a.shape), _sum_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _record(
        "sub", np.subtract, (a, b), lambda g, out: (_sum_to(g, a.shape), _sum_to(neg(g), b.shape))
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _record(
        "mul",
        np.multiply,
        (a, b),
        lambda g, out: (_sum_to(mul(g, b), a.shape), _sum_to(mul(g, a), b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def vjp(g, out):
        ga = div(g, b)
        return _sum_to(ga, a.shape), _sum_to(neg(mul(ga, out)), b.shape)

    return _record("div", np.divide, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", np.negative, (a,), lambda g, out: (neg(g),))


def matmul(a, b) -> Tensor:
    """Batched matrix product; both operands need at least two dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def vjp(g, out):
        ga = matmul(g, swapaxes(b, -1, -2))
        gb = matmul(swapaxes(a, -1, -2), g)
        return _sum_to(ga, a.shape), _sum_to(gb, b.shape)

    return _record("matmul", np.matmul, (a, b), vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    # derivative at exactly 0 is 0
    mask = Tensor((a.data > 0).astype(np.float64))
    return _record("relu", lambda x: np.maximum(x, 0.0), (a,), lambda g, out: (mul(g, mask),))


def abs_(a) -> Tensor:
    a = as_tensor(a)
    sign = Tensor(np.sign(a.data))
    return _record("abs", np.abs, (a,), lambda g, out: (mul(g, sign),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _record("square", np.square, (a,), lambda g, out: (mul(g, mul(a, 2.0)),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    return _record("exp", np.exp, (a,), lambda g, out: (mul(g, out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _record("log", np.log, (a,), lambda g, out: (div(g, a),))


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g, out):
        if not keepdims and axis is not None:
            axes = (axis,) if isinstance(axis, int) else axis
            axes = sorted(ax % len(shape) for ax in axes)
            kshape = list(g.shape)
            for ax in axes:
                kshape.insert(ax, 1)
            g = reshape(g, tuple(kshape))
        elif not keepdims:
            g = reshape(g, (1,) * len(shape))
        return (broadcast_to(g, shape),)

    return _record("sum", lambda x: np.sum(x, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def broadcast_to(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        np.broadcast_shapes(a.shape, shape)
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape) from None
    return _record(
        "broadcast_to",
        lambda x: np.broadcast_to(x, shape).copy(),
        (a,),
        lambda g, out: (_sum_to(g, a.shape),),
    )


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        np.empty(old).reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None
    return _record("reshape", lambda x: x.reshape(shape), (a,), lambda g, out: (reshape(g, old),))


def transpose(a, axes: tuple[int, ...] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _record(
        "transpose", lambda x: np.transpose(x, axes), (a,), lambda g, out: (transpose(g, inv),)
    )


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather ``indices`` along ``axis`` (integer array, repeats allowed)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    ax = axis % a.ndim
    size = a.shape[ax]
    if idx.size and (idx.min() < -size or idx.max() >= size):
        raise ShapeError("take", a.shape, idx.shape)
    return _record(
        "take",
        lambda x: np.take(x, idx, axis=ax),
        (a,),
        lambda g, out: (scatter(g, idx, ax, size),),
    )


def scatter(a, indices, axis: int, size: int) -> Tensor:
    """Adjoint of ``take``: sum slices of ``a`` into a zero array of length ``size``."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    ax = axis % a.ndim
    if idx.ndim != 1 or a.shape[ax] != idx.size:
        raise ShapeError("scatter", a.shape, idx.shape)

    def fn(x):
        out_shape = list(x.shape)
        out_shape[ax] = size
        out = np.zeros(out_shape)
        moved = np.moveaxis(out, ax, 0)
        np.add.at(moved, idx, np.moveaxis(x, ax, 0))
        return out

    return _record("scatter", fn, (a,), lambda g, out: (take(g, idx, ax),))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    ax = axis % ts[0].ndim
    try:
        np.concatenate([np.empty(t.shape) for t in ts], axis=ax)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in ts)) from None
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def vjp(g, out):
        return tuple(take(g, np.arange(bounds[i], bounds[i + 1]), ax) for i in range(len(ts)))

    return _record("concat", lambda *xs: np.concatenate(xs, axis=ax), ts, vjp)


def dropout(a, rate: float, rng: np.random.Generator | None, train: bool = True) -> Tensor:
    """Inverted dropout as a fixed-mask multiply; identity when deterministic."""
    a = as_tensor(a)
    if not train or rate <= 0.0 or rng is None or _deterministic:
        return a
    keep = (rng.random(a.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return mul(a, Tensor(keep))


# composites


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shift = Tensor(np.max(a.data, axis=axis, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, sum_(e, axis, keepdims=True))


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    s = sum_(exp(sub(a, Tensor(m))), axis, keepdims=True)
    out = add(log(s), Tensor(m))
    return reshape(out, np.squeeze(m, axis=axis).shape)


def l1_norm(a) -> Tensor:
    return sum_(abs_(a))


def sq_norm(a) -> Tensor:
    return sum_(square(a))


# --------------------------------------------------------------------------
# differentiation


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs, create_graph: bool = False) -> list[Tensor]:
    """Gradients of scalar ``output`` w.r.t. each of ``inputs``.

    Inputs the output does not depend on get zero gradients. With
    ``create_graph`` the returned tensors are themselves differentiable.
    """
    if output.size != 1:
        raise ShapeError("grad", output.shape)
    inputs = list(inputs)
    wanted = {id(x) for x in inputs}
    found: dict[int, Tensor] = {}
    if output.requires_grad:
        pending: dict[int, Tensor] = {id(output): Tensor(np.ones(output.shape))}
        with _grad_mode(create_graph):
            for node in reversed(_toposort(output)):
                g = pending.pop(id(node), None)
                if g is None:
                    continue
                if id(node) in wanted:
                    found[id(node)] = g
                if node.vjp is None:
                    continue
                for p, pg in zip(node.parents, node.vjp(g, node)):
                    if pg is None or not p.requires_grad:
                        continue
                    prev = pending.get(id(p))
                    pending[id(p)] = pg if prev is None else add(prev, pg)
    return [found.get(id(x), Tensor(np.zeros(x.shape))) for x in inputs]


# --------------------------------------------------------------------------
# parameter containers


class ParamSet(Mapping):
    """Immutable named collection of float64 arrays."""

    def __init__(self, values: Mapping[str, Any] | None = None, **kwargs: Any):
        items = dict(values or {}, **kwargs)
        self._data: dict[str, np.ndarray] = {}
        for name, v in items.items():
            arr = np.array(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{type(self).__name__}[{name}]")
            arr.setflags(write=False)
            self._data[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __iter__(self):
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}{v.shape}" for k, v in self._data.items())
        return f"{type(self).__name__}({shapes})"

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._data.items()}

    def num_values(self) -> int:
        return sum(v.size for v in self._data.values())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self._data.values()]) if self._data else np.zeros(0)

    def from_vector(self, vec: np.ndarray):
        out, pos = {}, 0
        for k, v in self._data.items():
            out[k] = np.asarray(vec[pos : pos + v.size]).reshape(v.shape)
            pos += v.size
        return type(self)(out)

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self._data.items()}

    def replace(self, **updates: Any):
        return type(self)({**self._data, **updates})

    def axpy(self, scale: float, other: Mapping[str, np.ndarray]):
        """Return ``self + scale * other`` entry by entry."""
        return type(self)({k: v + scale * other[k] for k, v in self._data.items()})

    def equal(self, other: Mapping[str, np.ndarray]) -> bool:
        """Bitwise equality of names, shapes and values."""
        return list(self) == list(other) and all(
            self[k].shape == other[k].shape and np.array_equal(self[k], other[k]) for k in self
        )


class GradSet(ParamSet):
    """Gradient values keyed like the ParamSet they differentiate."""


# --------------------------------------------------------------------------
# tapes


@dataclass
class _Entry:
    op: str
    fn: Callable
    parents: tuple[Tensor, ...]
    out: Tensor


@dataclass
class Tape:
    """Primitives recorded during one forward evaluation, in execution order."""

    entries: list[_Entry] = field(default_factory=list)
    leaves: dict[str, Tensor] = field(default_factory=dict)
    output: Tensor | None = None

    def _append(self, op, fn, parents, out) -> None:
        self.entries.append(_Entry(op, fn, parents, out))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ops(self) -> list[str]:
        return [e.op for e in self.entries]

    def replay(self, params: Mapping[str, np.ndarray] | None = None) -> float:
        """Re-run the recorded primitives, optionally from new leaf values."""
        if self.output is None:
            raise TapeError("tape has no output node")
        values: dict[int, np.ndarray] = {}
        for name, leaf in self.leaves.items():
            values[id(leaf)] = leaf.data if params is None else np.asarray(params[name], np.float64)
        for e in self.entries:
            args = [values.get(id(p), p.data) for p in e.parents]
            values[id(e.out)] = e.fn(*args)
        return float(values[id(self.output)].reshape(-1)[0])


def eval_with_tape(f: Callable[[dict[str, Tensor]], Tensor], params: ParamSet) -> tuple[float, Tape]:
    """Evaluate scalar ``f`` on ``params`` while recording a tape."""
    tape = Tape()
    tape.leaves = params.tensors(requires_grad=True)
    prev = _active_tape()
    _local.tape = tape
    try:
        with _grad_mode(True):
            out = as_tensor(f(tape.leaves))
    finally:
        _local.tape = prev
    if out.size != 1:
        raise ShapeError("eval_with_tape", out.shape)
    tape.output = out
    return out.item(), tape


def gradient(tape: Tape, verify: bool = False) -> GradSet:
    """Gradient of the tape's scalar output w.r.t. every leaf parameter.

    With ``verify`` the tape is replayed first and any drift from the
    recorded output raises ``TapeError``.
    """
    if tape.output is None:
        raise TapeError("tape has no output node")
    if verify and tape.replay() != tape.output.item():
        raise TapeError("tape replay diverged from recorded output")
    names = list(tape.leaves)
    gs = grad(tape.output, [tape.leaves[n] for n in names])
    return GradSet({n: g.data for n, g in zip(names, gs)})


def gradient_through_adaptation(
    meta: ParamSet,
    support_loss: Callable[[dict[str, Tensor]], Tensor],
    query_loss: Callable[[dict[str, Tensor]], Tensor],
    steps: int,
    eta_inner: float,
    mode: str = "first_order",
) -> tuple[float, GradSet]:
    """Meta-gradient of ``query_loss(adapted(meta))`` w.r.t. ``meta``.

    ``adapted`` is ``steps`` plain gradient steps on ``support_loss``. In
    ``second_order`` mode the unrolled updates stay on the graph; in
    ``first_order`` mode the adapted parameters are treated as constants.
    Returns the query loss at the adapted parameters and the gradient.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if eta_inner <= 0:
        raise ValueError("eta_inner must be > 0")
    if mode not in ("first_order", "second_order"):
        raise ValueError(f"unknown mode {mode!r}")
    with _grad_mode(True):
        return _adapt_and_differentiate(meta, support_loss, query_loss, steps, eta_inner,
                                        mode == "second_order")


def _adapt_and_differentiate(meta, support_loss, query_loss, steps, eta_inner, second):
    names = list(meta)
    leaves = meta.tensors(requires_grad=True)
    theta = dict(leaves)
    for step in range(steps):
        try:
            loss = as_tensor(support_loss(theta))
            gs = grad(loss, [theta[n] for n in names], create_graph=second)
            if second:
                theta = {n: sub(theta[n], mul(g, eta_inner)) for n, g in zip(names, gs)}
            else:
                theta = {
                    n: Tensor(theta[n].data - eta_inner * g.data, requires_grad=True)
                    for n, g in zip(names, gs)
                }
        except NonFiniteError as exc:
            raise DivergenceError("non-finite value during inner adaptation", step) from exc
        if not all(np.all(np.isfinite(t.data)) for t in theta.values()):
            raise DivergenceError("non-finite adapted parameters", step)
    try:
        q = as_tensor(query_loss(theta))
    except NonFiniteError as exc:
        raise DivergenceError("non-finite query loss", steps) from exc
    wrt = [leaves[n] for n in names] if second else [theta[n] for n in names]
    gs = grad(q, wrt)
    return q.item(), GradSet({n: g.data for n, g in zip(names, gs)})


def finite_difference_gradient(
    f: Callable[[dict[str, Tensor]], Tensor], params: ParamSet, h: float = 1e-5
) -> GradSet:
    """Central-difference gradient estimate, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be > 0")
    out = {}
    with no_grad():
        for name in params:
            base = np.array(params[name])
            g = np.zeros_like(base)
            flat = base.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = as_tensor(f({**params.tensors(), name: Tensor(base)})).item()
                flat[i] = orig - h
                down = as_tensor(f({**params.tensors(), name: Tensor(base)})).item()
                flat[i] = orig
                g.reshape(-1)[i] = (up - down) / (2 * h)
            out[name] = g
    return GradSet(out)


def relative_error(a, b, floor: float = 1e-8) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)`` over flattened arrays."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
