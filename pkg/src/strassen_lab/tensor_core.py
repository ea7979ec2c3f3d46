"""Dense linear-algebra substrate.

Matrices are plain 2-D ``float64`` numpy arrays. ``matmul`` is a compiled
row-major triple loop (the naive O(n^3) product); ``strassen_matmul`` runs the
classical seven-product recursion on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

DEFAULT_CUTOFF = 64


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


@numba.njit(cache=True)
def _matmul_loop(a, b):
    n, k = a.shape
    m = b.shape[1]
    c = np.zeros((n, m))
    for i in range(n):
        for p in range(k):
            aip = a[i, p]
            for j in range(m):
                c[i, j] += aip * b[p, j]
    return c


def matmul(a, b) -> np.ndarray:
    """Naive product ``a @ b`` with a fixed i-p-j accumulation order."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _matmul_loop(np.ascontiguousarray(a), np.ascontiguousarray(b))


def _pad_even(m: np.ndarray) -> np.ndarray:
    r, c = m.shape
    if r % 2 == 0 and c % 2 == 0:
        return m
    out = np.zeros((r + r % 2, c + c % 2))
    out[:r, :c] = m
    return out


def _strassen(a: np.ndarray, b: np.ndarray, cutoff: int, base) -> np.ndarray:
    p, q = a.shape
    r = b.shape[1]
    if min(p, q, r) <= cutoff:
        return base(a, b)
    a = _pad_even(a)
    b = _pad_even(b)
    h, k, w = a.shape[0] // 2, a.shape[1] // 2, b.shape[1] // 2
    a11, a12, a21, a22 = a[:h, :k], a[:h, k:], a[h:, :k], a[h:, k:]
    b11, b12, b21, b22 = b[:k, :w], b[:k, w:], b[k:, :w], b[k:, w:]

    m1 = _strassen(a11 + a22, b11 + b22, cutoff, base)
    m2 = _strassen(a21 + a22, b11, cutoff, base)
    m3 = _strassen(a11, b12 - b22, cutoff, base)
    m4 = _strassen(a22, b21 - b11, cutoff, base)
    m5 = _strassen(a11 + a12, b22, cutoff, base)
    m6 = _strassen(a21 - a11, b11 + b12, cutoff, base)
    m7 = _strassen(a12 - a22, b21 + b22, cutoff, base)

    c = np.empty((2 * h, 2 * w))
    c[:h, :w] = m1 + m4 - m5 + m7
    c[:h, w:] = m3 + m5
    c[h:, :w] = m2 + m4
    c[h:, w:] = m1 - m2 + m3 + m6
    return c[:p, :r]


def strassen_matmul(a, b, cutoff: int = DEFAULT_CUTOFF,
                    base: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Strassen's seven-multiplication recursion.

    Blocks whose smallest dimension is ``<= cutoff`` are handed to ``base``
    (the naive ``matmul`` unless overridden). Odd dimensions are zero-padded
    to the next even size at each level, so any rectangular pair works.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    return _strassen(a, b, cutoff, base or matmul)


def stable_softmax(scores, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax; ``-inf`` entries get probability exactly 0."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("softmax of an empty vector")
    if np.isnan(s).any() or np.isposinf(s).any():
        raise ValueError("scores must be finite or -inf")
    top = np.max(s, axis=axis, keepdims=True)
    if np.isneginf(top).any():
        raise ValueError("softmax with empty support (all entries are -inf)")
    e = np.exp(s - top)
    return e / np.sum(e, axis=axis, keepdims=True)


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class MLPParams:
    """Affine layers ``(W, b)`` with ``W`` of shape (out, in); ReLU between layers."""

    layers: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        fixed = []
        for w, b in self.layers:
            w = as_matrix(w)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if b.shape[0] != w.shape[0]:
                raise ShapeError(f"bias of length {b.shape[0]} for weight {w.shape}")
            fixed.append((w, b))
        for (w1, _), (w2, _) in zip(fixed, fixed[1:]):
            if w2.shape[1] != w1.shape[0]:
                raise ShapeError(f"layer chain broken: {w1.shape} -> {w2.shape}")
        self.layers = fixed

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    @classmethod
    def single(cls, weight: Sequence[Sequence[float]], bias: Sequence[float]) -> "MLPParams":
        return cls([(np.asarray(weight, dtype=np.float64), np.asarray(bias, dtype=np.float64))])


def mlp_eval(params: MLPParams, x) -> np.ndarray:
    """Evaluate the MLP on a vector, or row-wise on a (..., in) array."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != params.in_dim:
        raise ShapeError(f"input dim {h.shape[-1]} != MLP in-dim {params.in_dim}")
    last = len(params.layers) - 1
    for t, (w, b) in enumerate(params.layers):
        h = h @ w.T + b
        if t < last:
            h = relu(h)
    return h
