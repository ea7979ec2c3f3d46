"""Forward passes for standard, triangular, third-order and Strassen attention.

Token sequences are ``(n, d)`` arrays (one row per token). Projection
matrices have shape ``(d_out, d)`` and act as ``x @ W.T``. All softmaxes are
max-shifted; masked keys get probability exactly 0.

Strassen attention scores the triple ``(i, j, k)`` with
``f_i.g_j + g_j.h_k + h_k.f_i``. ``strassen_attention_naive`` enumerates all
``n^3`` triples; ``strassen_attention_fast`` rewrites the same sums as
diagonals of three-matrix products and costs ``d + 1`` n-by-n products.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DEFAULT_CUTOFF, ShapeError, stable_softmax, strassen_matmul


class Kind(str, enum.Enum):
    STANDARD = "standard"
    TRIANGULAR = "triangular"
    THIRD_ORDER = "third_order"
    STRASSEN = "strassen"


MATRIX_NAMES = {
    Kind.STANDARD: ("wq", "wk", "wv"),
    Kind.TRIANGULAR: ("wq", "wk", "v1", "v2"),
    Kind.THIRD_ORDER: ("wq", "wk1", "wk2", "v1", "v2"),
    Kind.STRASSEN: ("wf", "wg", "wh", "v1", "v2"),
}


@dataclass
class AttentionParams:
    """Projection matrices of one head.

    Every matrix takes the embedding dimension ``d`` as its in-dim and all of
    them share one out-dim ``d_out`` (``d_out != d`` is allowed). ``scale``
    multiplies the raw scores and defaults to ``1/sqrt(d)``.
    """

    kind: Kind
    matrices: dict[str, np.ndarray]
    scale: float | None = None

    def __post_init__(self):
        self.kind = Kind(self.kind)
        names = MATRIX_NAMES[self.kind]
        if set(self.matrices) != set(names):
            raise ShapeError(f"{self.kind.value} head needs matrices {names}, got {sorted(self.matrices)}")
        mats = {k: np.atleast_2d(np.asarray(self.matrices[k], dtype=np.float64)) for k in names}
        shapes = {m.shape for m in mats.values()}
        if len(shapes) != 1:
            raise ShapeError(f"all matrices of a head must share one shape, got {shapes}")
        self.matrices = mats
        if self.scale is None:
            self.scale = 1.0 / math.sqrt(self.in_dim)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.matrices[name]

    @property
    def in_dim(self) -> int:
        return next(iter(self.matrices.values())).shape[1]

    @property
    def out_dim(self) -> int:
        return next(iter(self.matrices.values())).shape[0]

    @classmethod
    def random(cls, kind, d: int, rng: np.random.Generator, d_out: int | None = None,
               std: float = 1.0, scale: float | None = None) -> "AttentionParams":
        kind = Kind(kind)
        d_out = d if d_out is None else d_out
        mats = {k: rng.normal(0.0, std, size=(d_out, d)) for k in MATRIX_NAMES[kind]}
        return cls(kind, mats, scale)


def _tokens(x, p: AttentionParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (n, d) token array, got shape {x.shape}")
    if x.shape[1] != p.in_dim:
        raise ShapeError(f"token dim {x.shape[1]} != head in-dim {p.in_dim}")
    return x


def _check_kind(p: AttentionParams, kind: Kind):
    if p.kind != kind:
        raise ValueError(f"expected a {kind.value} head, got {p.kind.value}")


def _key_mask(key_mask, n: int) -> np.ndarray:
    if key_mask is None:
        return np.ones(n, dtype=bool)
    km = np.asarray(key_mask, dtype=bool).reshape(-1)
    if km.shape[0] != n:
        raise ShapeError("key mask length does not match token count")
    if not km.any():
        raise ValueError("every key is masked")
    return km


def standard_attention(x, p: AttentionParams, mask=None) -> np.ndarray:
    """``a_i = sum_j softmax_j(q_i.k_j * scale) v_j``.

    ``mask[i, j]`` True means query ``i`` may attend to key ``j``.
    """
    _check_kind(p, Kind.STANDARD)
    x = _tokens(x, p)
    q, k, v = x @ p["wq"].T, x @ p["wk"].T, x @ p["wv"].T
    s = (q @ k.T) * p.scale
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != s.shape:
            raise ShapeError(f"mask shape {mask.shape} != {s.shape}")
        s = np.where(mask, s, -np.inf)
    return stable_softmax(s, axis=1) @ v


def as_grid(x, d: int | None = None) -> np.ndarray:
    """Accept an (m, m, d) grid or a flat row-major (m*m, d) sequence."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        if x.shape[0] != x.shape[1]:
            raise ShapeError(f"grid must be square, got {x.shape}")
        return x
    if x.ndim != 2:
        raise ShapeError(f"cannot read shape {x.shape} as a grid")
    m = math.isqrt(x.shape[0])
    if m * m != x.shape[0] or m == 0:
        raise ShapeError(f"{x.shape[0]} tokens is not a perfect square")
    return x.reshape(m, m, x.shape[1])


def triangular_attention(xgrid, p: AttentionParams, key_mask=None) -> np.ndarray:
    """``a_ij = sum_l softmax_l(q_il.k_lj * scale) (V1 x_il * V2 x_lj)``.

    Returns an (m, m, d_out) grid. ``key_mask`` is an (m, m) validity grid; the
    middle index ``l`` is dropped for query ``(i, j)`` if ``(i, l)`` or
    ``(l, j)`` is invalid.
    """
    _check_kind(p, Kind.TRIANGULAR)
    g = as_grid(xgrid)
    if g.shape[2] != p.in_dim:
        raise ShapeError(f"token dim {g.shape[2]} != head in-dim {p.in_dim}")
    q, k = g @ p["wq"].T, g @ p["wk"].T
    v1, v2 = g @ p["v1"].T, g @ p["v2"].T
    s = np.einsum("ilc,ljc->ijl", q, k) * p.scale
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)
        allowed = km[:, None, :] & km.T[None, :, :]   # [i, j, l] = km[i, l] & km[l, j]
        s = np.where(allowed, s, -np.inf)
    w = stable_softmax(s, axis=2)
    return np.einsum("ijl,ilc,ljc->ijc", w, v1, v2)


def third_order_attention(x, p: AttentionParams, key_mask=None) -> np.ndarray:
    """``a_i = sum_{j,l} softmax_{j,l}(q_i.(k_j * k_l) * scale) (v_j * v_l)``."""
    _check_kind(p, Kind.THIRD_ORDER)
    x = _tokens(x, p)
    km = _key_mask(key_mask, x.shape[0])
    q = x @ p["wq"].T
    xs = x[km]
    k1, k2 = xs @ p["wk1"].T, xs @ p["wk2"].T
    v1, v2 = xs @ p["v1"].T, xs @ p["v2"].T
    n, m = x.shape[0], xs.shape[0]
    s = np.einsum("ic,jc,lc->ijl", q, k1, k2).reshape(n, m * m) * p.scale
    w = stable_softmax(s, axis=1).reshape(n, m, m)
    return np.einsum("ijl,jc,lc->ic", w, v1, v2)


def strassen_projections(x, p: AttentionParams):
    """Return ``f, g, h, v1, v2`` (each ``(n, d_out)``)."""
    return tuple(x @ p[name].T for name in MATRIX_NAMES[Kind.STRASSEN])


def strassen_scores(x, p: AttentionParams) -> np.ndarray:
    """Unscaled triple scores ``S[i, j, k] = f_i.g_j + g_j.h_k + h_k.f_i``."""
    f, g, h, _, _ = strassen_projections(_tokens(x, p), p)
    fg, gh, hf = f @ g.T, g @ h.T, h @ f.T
    return fg[:, :, None] + gh[None, :, :] + hf.T[:, None, :]


def strassen_attention_naive(x, p: AttentionParams, key_mask=None,
                             chunk_bytes: int = 1 << 26) -> np.ndarray:
    """Definitional O(n^3 d) evaluation, softmax over all n^2 pairs per query.

    Queries are processed in chunks so the score block stays under
    ``chunk_bytes``.
    """
    _check_kind(p, Kind.STRASSEN)
    x = _tokens(x, p)
    km = _key_mask(key_mask, x.shape[0])
    f, g, h, v1, v2 = strassen_projections(x, p)
    g, h, v1, v2 = g[km], h[km], v1[km], v2[km]
    n, m = f.shape[0], g.shape[0]
    fg = (f @ g.T) * p.scale          # [i, j]
    gh = (g @ h.T) * p.scale          # [j, k]
    hf = (f @ h.T) * p.scale          # [i, k]
    out = np.empty((n, v1.shape[1]))
    step = max(1, chunk_bytes // (8 * m * m))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        s = fg[lo:hi, :, None] + gh[None, :, :] + hf[lo:hi, None, :]
        s -= s.max(axis=(1, 2), keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=(1, 2), keepdims=True)
        # sum_{j,k} w[i,j,k] v1[j,c] v2[k,c]
        t = (s.reshape(-1, m) @ v2).reshape(hi - lo, m, -1)
        out[lo:hi] = np.einsum("ijc,jc->ic", t, v1)
    return out


# Denominators below this are recomputed row by row in the log domain.
_UNDERFLOW = 1e-280

# Single-threaded, Strassen over a BLAS base only beat plain BLAS beyond n = 2048
# on the development machine, so the recursion is off at desk sizes by default.
FAST_STRASSEN_THRESHOLD = 4096


def strassen_attention_fast(x, p: AttentionParams, key_mask=None, product=None,
                            threshold: int = FAST_STRASSEN_THRESHOLD,
                            return_info: bool = False):
    """Evaluate Strassen attention with ``d + 1`` n-by-n matrix products.

    With ``X[i,j] = e^{s f_i.g_j}``, ``Y[j,k] = e^{s g_j.h_k}``,
    ``Z[k,i] = e^{s h_k.f_i}`` the output is
    ``a_i[c] = (X diag(v1[:,c]) Y diag(v2[:,c]) Z)_ii / (X Y Z)_ii``.

    Each factor is stored shifted so its entries are <= 1: ``Y`` by its row
    maxima ``b_j`` (moved into ``X`` through a diagonal matrix), ``X`` by row
    maxima and ``Z`` by column maxima (both per-query, so they cancel in the
    ratio). When a query's denominator still underflows, that row is
    recomputed directly in O(n^2 d).

    ``product`` multiplies two n-by-n matrices; by default Strassen's
    recursion (base blocks of at least ``threshold // 2``) is used once
    ``n >= threshold`` and BLAS below.
    """
    _check_kind(p, Kind.STRASSEN)
    x = _tokens(x, p)
    km = _key_mask(key_mask, x.shape[0])
    f, g, h, v1, v2 = strassen_projections(x, p)
    g, h, v1, v2 = g[km], h[km], v1[km], v2[km]
    n = f.shape[0]
    if product is None:
        if min(n, g.shape[0]) >= threshold:
            def product(a, b):
                return strassen_matmul(a, b, max(DEFAULT_CUTOFF, threshold // 2), base=np.matmul)
        else:
            product = np.matmul

    s = p.scale
    l1 = (f @ g.T) * s                   # [i, j]
    l2 = (g @ h.T) * s                   # [j, k]
    l3 = (h @ f.T) * s                   # [k, i]
    b = l2.max(axis=1)
    y = np.exp(l2 - b[:, None])
    l1 = l1 + b[None, :]
    xm = np.exp(l1 - l1.max(axis=1, keepdims=True))
    z = np.exp(l3 - l3.max(axis=0, keepdims=True))

    # diag(A B) = sum_j A[i, j] B[j, i]
    den = np.einsum("ij,ji->i", xm, product(y, z))
    out = np.empty((n, v1.shape[1]))
    for c in range(v1.shape[1]):
        t = product(y, v2[:, c, None] * z)
        out[:, c] = np.einsum("ij,ji->i", xm * v1[None, :, c], t)

    bad = ~(den > _UNDERFLOW) | ~np.isfinite(out).all(axis=1)
    out[~bad] /= den[~bad, None]
    fallback = np.flatnonzero(bad)
    for i in fallback:
        row = l1[i][:, None] - b[:, None] + l2 + l3[:, i][None, :]
        row -= row.max()
        w = np.exp(row)
        w /= w.sum()
        out[i] = np.einsum("jk,jc,kc->c", w, v1, v2)
    if return_info:
        return out, {"fallback_rows": fallback.tolist()}
    return out


@dataclass
class SplitDecomposition:
    """Numerator/denominator pieces of standard attention at one query.

    The output equals ``(alpha + beta + gamma) / (lam + mu + nu)``. All terms
    share the exponential shift ``shift``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    lam: float
    mu: float
    nu: float
    positions: tuple[int, ...]
    shift: float = 0.0
    extra: dict = field(default_factory=dict)

    def recombine(self) -> np.ndarray:
        return (self.alpha + self.beta + self.gamma) / (self.lam + self.mu + self.nu)


def split_decompose(x, p: AttentionParams, positions, shift: float | None = None) -> SplitDecomposition:
    """Split the auxiliary token's attention output over a position set.

    ``x`` holds ``n`` word tokens followed by the auxiliary token (last row).
    ``positions`` (0-based, subset of ``range(n)``) feed ``alpha``/``lam``;
    the remaining word tokens feed ``beta``/``mu``; the auxiliary token's
    self-term gives ``gamma``/``nu``. ``shift`` defaults to the largest score.
    """
    _check_kind(p, Kind.STANDARD)
    x = _tokens(x, p)
    n = x.shape[0] - 1
    a = sorted(set(int(t) for t in positions))
    if any(t < 0 or t > n for t in a):
        raise ValueError("position outside the word")
    if n in a:
        raise ValueError("the auxiliary token cannot belong to the position set")
    q = x[n] @ p["wq"].T
    k, v = x @ p["wk"].T, x @ p["wv"].T
    scores = (k @ q) * p.scale
    c = float(scores.max()) if shift is None else float(shift)
    w = np.exp(scores - c)
    in_a = np.zeros(n + 1, dtype=bool)
    in_a[a] = True
    in_b = ~in_a
    in_b[n] = False
    return SplitDecomposition(
        alpha=w[in_a] @ v[in_a], beta=w[in_b] @ v[in_b], gamma=w[n] * v[n],
        lam=float(w[in_a].sum()), mu=float(w[in_b].sum()), nu=float(w[n]),
        positions=tuple(a), shift=c,
    )


KERNELS = {
    Kind.STANDARD: standard_attention,
    Kind.TRIANGULAR: triangular_attention,
    Kind.THIRD_ORDER: third_order_attention,
    Kind.STRASSEN: strassen_attention_naive,
}


def attend(x, p: AttentionParams, strassen_path: str = "naive", key_mask=None) -> np.ndarray:
    """Dispatch on ``p.kind``; sequences in, ``(n, d_out)`` out."""
    if p.kind is Kind.STANDARD:
        mask = None
        if key_mask is not None:
            km = np.asarray(key_mask, dtype=bool)
            mask = np.broadcast_to(km[None, :], (len(km), len(km)))
        return standard_attention(x, p, mask)
    if p.kind is Kind.TRIANGULAR:
        g = as_grid(x)
        m = g.shape[0]
        km = None if key_mask is None else np.asarray(key_mask, dtype=bool).reshape(m, m)
        return triangular_attention(g, p, km).reshape(m * m, -1)
    if p.kind is Kind.THIRD_ORDER:
        return third_order_attention(x, p, key_mask)
    if strassen_path == "fast":
        return strassen_attention_fast(x, p, key_mask)
    if strassen_path != "naive":
        raise ValueError(f"unknown strassen path {strassen_path!r}")
    return strassen_attention_naive(x, p, key_mask)
