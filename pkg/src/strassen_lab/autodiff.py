"""Reverse-mode differentiation on a recorded tape.

Operations on :class:`Tensor` append a :class:`TapeNode` to the active
:class:`Tape`; nodes are stored in creation order, so every parent index is
smaller than its child's and the reverse sweep is a simple backwards loop.

    >>> import numpy as np
    >>> g = grad(lambda x: sum(x * x), [np.array([[3.0]])])
    >>> float(g[0][0, 0])
    6.0
"""

from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

OP_KINDS = frozenset({
    "leaf", "matmul", "add", "sub", "neg", "hadamard", "div", "exp", "log",
    "relu", "softplus", "softmax", "sum", "select", "reshape", "transpose",
    "einsum",
})


class UnsupportedOpError(TypeError):
    """A computation used an operation the tape cannot differentiate."""


@dataclass
class TapeNode:
    op: str
    parents: tuple[int, ...]
    # maps the output cotangent to one cotangent per parent
    backward: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None
    cache: dict = field(default_factory=dict)


class Tape:
    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()

    @classmethod
    def current(cls) -> "Tape":
        if not cls._stack:
            raise RuntimeError("no active tape; wrap the computation in `with Tape():`")
        return cls._stack[-1]

    def record(self, op: str, parents, backward=None, **cache) -> int:
        if op not in OP_KINDS:
            raise UnsupportedOpError(f"unsupported op kind {op!r}")
        for p in parents:
            if not 0 <= p < len(self.nodes):
                raise ValueError("parent index must precede the node")
        self.nodes.append(TapeNode(op, tuple(parents), backward, cache))
        return len(self.nodes) - 1

    def leaf(self, value) -> "Tensor":
        value = np.array(value, dtype=np.float64)
        return Tensor(value, self.record("leaf", ()), self)

    def backward(self, out: "Tensor", wrt: Sequence["Tensor"]) -> list[np.ndarray]:
        if out.value.size != 1:
            raise ValueError("backward needs a scalar output")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[out.index] = np.ones_like(out.value)
        for idx in range(out.index, -1, -1):
            g = grads[idx]
            node = self.nodes[idx]
            if g is None or node.backward is None:
                continue
            for p, gp in zip(node.parents, node.backward(g)):
                if gp is None:
                    continue
                grads[p] = gp if grads[p] is None else grads[p] + gp
        result = []
        for t in wrt:
            g = grads[t.index]
            result.append(np.zeros_like(t.value) if g is None else g)
        return result


class Tensor:
    """A value recorded on a tape. Numpy ufuncs are refused on purpose."""

    __slots__ = ("value", "index", "tape")
    # ndarray binary ops defer to our reflected operators; np.exp(t) etc. raise TypeError
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, index: int, tape: Tape):
        self.value = value
        self.index = index
        self.tape = tape

    def __array_function__(self, func, types, args, kwargs):
        raise UnsupportedOpError(f"numpy function {func.__name__!r} is not differentiable here")

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, index={self.index})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return select(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _make(op: str, value, inputs, backward, **cache):
    tensors = [x for x in inputs if isinstance(x, Tensor)]
    if not tensors:
        return value
    tape = tensors[0].tape
    parents, which = [], []
    for pos, x in enumerate(inputs):
        if isinstance(x, Tensor):
            parents.append(x.index)
            which.append(pos)

    def bw(g):
        grads = backward(g)
        return tuple(grads[pos] for pos in which)

    return Tensor(value, tape.record(op, parents, bw, **cache), tape)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    av, bv = _val(a), _val(b)
    return _make("add", av + bv, (a, b),
                 lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = _val(a), _val(b)
    return _make("sub", av - bv, (a, b),
                 lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape)))


def neg(a):
    return _make("neg", -_val(a), (a,), lambda g: (-g,))


def mul(a, b):
    """Elementwise (Hadamard) product with broadcasting."""
    av, bv = _val(a), _val(b)
    return _make("hadamard", av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / bv, av.shape),
                            _unbroadcast(-g * out / bv, bv.shape)))


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def bw(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _make("matmul", av @ bv, (a, b), bw)


def exp(a):
    out = np.exp(_val(a))
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a):
    av = _val(a)
    return _make("log", np.log(av), (a,), lambda g: (g / av,))


def relu(a):
    av = _val(a)
    return _make("relu", np.maximum(av, 0.0), (a,), lambda g: (g * (av > 0),))


def softplus(a):
    """log(1 + e^x), evaluated without overflow."""
    av = _val(a)
    out = np.maximum(av, 0.0) + np.log1p(np.exp(-np.abs(av)))
    sig = np.exp(-np.logaddexp(0.0, -av))
    return _make("softplus", out, (a,), lambda g: (g * sig,))


def softmax(a, axis: int = -1, mask: np.ndarray | None = None):
    """Stable softmax along ``axis``; entries where ``mask`` is False get 0."""
    av = _val(a)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), av.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax row with every entry masked")
        av = np.where(mask, av, -np.inf)
    top = np.max(av, axis=axis, keepdims=True)
    e = np.exp(av - top)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _make("softmax", out, (a,), bw)


def sum(a, axis=None, keepdims: bool = False):
    av = _val(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _make("sum", np.asarray(out), (a,), bw)


def mean(a, axis=None):
    av = _val(a)
    count = av.size if axis is None else av.shape[axis]
    return sum(a, axis=axis) / float(count)


def select(a, key):
    """Indexing (basic or integer-array); the backward pass scatters with ``add.at``."""
    av = _val(a)

    def bw(g):
        out = np.zeros_like(av)
        np.add.at(out, key, g)
        return (out,)

    return _make("select", av[key], (a,), bw)


def take_rows(table, ids: np.ndarray):
    """Embedding lookup: ``table[ids]`` for an integer array of any shape."""
    return select(table, np.asarray(ids, dtype=np.intp))


def reshape(a, shape):
    av = _val(a)
    return _make("reshape", av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def transpose(a, axes=None):
    av = _val(a)
    if axes is None:
        axes = tuple(reversed(range(av.ndim)))
    inverse = np.argsort(axes)
    return _make("transpose", np.transpose(av, axes), (a,),
                 lambda g: (np.transpose(g, inverse),))


def einsum(subscripts: str, *operands):
    """Explicit-output einsum (``"ij,jk->ik"``); no ellipsis, no repeated
    index inside one operand."""
    if "->" not in subscripts or "." in subscripts:
        raise ValueError("einsum needs explicit output subscripts and no ellipsis")
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    in_subs = lhs.split(",")
    if len(in_subs) != len(operands):
        raise ValueError("operand count does not match subscripts")
    for s in in_subs:
        if len(set(s)) != len(s):
            raise ValueError(f"repeated index in operand {s!r}")
    vals = [_val(x) for x in operands]
    out = np.einsum(subscripts, *vals, optimize=True)

    def bw(g):
        grads = []
        for k, sk in enumerate(in_subs):
            others = [s for j, s in enumerate(in_subs) if j != k] + [out_sub]
            available = set("".join(others))
            kept = "".join(c for c in sk if c in available)
            ops = [v for j, v in enumerate(vals) if j != k] + [g]
            gk = np.einsum(",".join(others) + "->" + kept, *ops, optimize=True)
            if kept != sk:
                # indices summed only inside this operand: broadcast back along them
                shape = [vals[k].shape[i] if c in available else 1 for i, c in enumerate(sk)]
                gk = np.broadcast_to(np.reshape(gk, shape), vals[k].shape).copy()
            grads.append(gk)
        return tuple(grads)

    return _make("einsum", out, operands, bw)


def value_and_grad(f: Callable[..., Tensor], params: Sequence[np.ndarray]):
    """Run ``f(*params)`` on a fresh tape; return its value and the gradients."""
    with Tape() as tape:
        leaves = [tape.leaf(p) for p in params]
        out = f(*leaves)
        if not isinstance(out, Tensor):
            return float(np.asarray(out).reshape(())), [np.zeros_like(np.asarray(p, dtype=float)) for p in params]
        grads = tape.backward(out, leaves)
    return float(out.value.reshape(())), grads


def grad(f: Callable[..., Tensor], params: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Gradient of the scalar ``f(*params)`` with respect to every parameter."""
    return value_and_grad(f, params)[1]


def evaluate(f: Callable[..., Tensor], params: Sequence[np.ndarray]) -> float:
    with Tape() as tape:
        out = f(*[tape.leaf(p) for p in params])
    return float(_val(out).reshape(()))


def fd_check(f: Callable[..., Tensor], params: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    The relative error of a coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    params = [np.array(p, dtype=np.float64) for p in params]
    analytic = grad(f, params)
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        ga = analytic[k].reshape(-1)
        for t in range(flat.size):
            orig = flat[t]
            flat[t] = orig + eps
            up = evaluate(f, params)
            flat[t] = orig - eps
            down = evaluate(f, params)
            flat[t] = orig
            num = (up - down) / (2.0 * eps)
            denom = builtins.max(abs(ga[t]), abs(num), 1e-8)
            worst = builtins.max(worst, abs(ga[t] - num) / denom)
    return worst
