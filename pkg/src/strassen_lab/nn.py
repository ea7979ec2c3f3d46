"""Batched, differentiable one-layer transformers built on the autodiff tape.

Inputs are ``(B, N, d)`` tensors with a ``(B, N)`` key mask (True = real
token). The mechanisms match the single-sequence kernels in
:mod:`strassen_lab.attention`; ``tests/test_nn.py`` checks that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import MATRIX_NAMES, Kind

MECHANISMS = tuple(k.value for k in Kind)


def _proj(x, w):
    return ad.einsum("bnd,ed->bne", x, w)


def standard_batch(x, mats, key_mask, scale):
    q, k, v = (_proj(x, mats[n]) for n in ("wq", "wk", "wv"))
    s = ad.einsum("bie,bje->bij", q, k) * scale
    w = ad.softmax(s, axis=2, mask=key_mask[:, None, :])
    return ad.einsum("bij,bje->bie", w, v)


def third_order_batch(x, mats, key_mask, scale):
    q, k1, k2, v1, v2 = (_proj(x, mats[n]) for n in MATRIX_NAMES[Kind.THIRD_ORDER])
    b, n = key_mask.shape
    s = ad.reshape(ad.einsum("bie,bje,ble->bijl", q, k1, k2) * scale, (b, n, n * n))
    pair = (key_mask[:, :, None] & key_mask[:, None, :]).reshape(b, 1, n * n)
    w = ad.reshape(ad.softmax(s, axis=2, mask=pair), (b, n, n, n))
    return ad.einsum("bijl,bje,ble->bie", w, v1, v2)


def strassen_batch(x, mats, key_mask, scale):
    f, g, h, v1, v2 = (_proj(x, mats[n]) for n in MATRIX_NAMES[Kind.STRASSEN])
    b, n = key_mask.shape
    fg = ad.reshape(ad.einsum("bie,bje->bij", f, g), (b, n, n, 1))
    gh = ad.reshape(ad.einsum("bje,bke->bjk", g, h), (b, 1, n, n))
    hf = ad.reshape(ad.einsum("bie,bke->bik", f, h), (b, n, 1, n))
    s = ad.reshape((fg + gh + hf) * scale, (b, n, n * n))
    pair = (key_mask[:, :, None] & key_mask[:, None, :]).reshape(b, 1, n * n)
    w = ad.reshape(ad.softmax(s, axis=2, mask=pair), (b, n, n, n))
    return ad.einsum("bijk,bje,bke->bie", w, v1, v2)


def triangular_batch(x, mats, key_mask, scale):
    """``x`` holds row-major ``m x m`` grids; queries with no valid middle index see all of them."""
    b, n, d = x.shape
    m = math.isqrt(n)
    if m * m != n:
        raise ValueError("triangular attention needs a square token grid")
    grid = ad.reshape(x, (b, m, m, d))
    q, k, v1, v2 = (ad.einsum("bijd,ed->bije", grid, mats[nm]) for nm in MATRIX_NAMES[Kind.TRIANGULAR])
    s = ad.einsum("bile,blje->bijl", q, k) * scale
    km = key_mask.reshape(b, m, m)
    allowed = km[:, :, None, :] & np.swapaxes(km, 1, 2)[:, None, :, :]   # [b,i,j,l] = km[i,l] & km[l,j]
    allowed = allowed | ~allowed.any(axis=3, keepdims=True)
    w = ad.softmax(s, axis=3, mask=allowed)
    out = ad.einsum("bijl,bile,blje->bije", w, v1, v2)
    return ad.reshape(out, (b, n, -1))


BATCH_KERNELS = {
    Kind.STANDARD: standard_batch,
    Kind.TRIANGULAR: triangular_batch,
    Kind.THIRD_ORDER: third_order_batch,
    Kind.STRASSEN: strassen_batch,
}


@dataclass
class ModelShape:
    mechanism: str
    d: int
    heads: int
    vocab: dict[str, int]            # embedding table name -> number of ids
    hidden: int = 0                  # MLP hidden width; 0 means 4d

    def __post_init__(self):
        Kind(self.mechanism)
        if self.hidden <= 0:
            self.hidden = 4 * self.d


@dataclass
class Model:
    shape: ModelShape
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, shape: ModelShape, rng: np.random.Generator) -> "Model":
        """Every matrix is drawn from ``U[-1/sqrt(d), 1/sqrt(d)]``; biases start at 0."""
        d, hid = shape.d, shape.hidden
        bound = 1.0 / math.sqrt(d)
        p = {}
        for name, size in shape.vocab.items():
            p[f"emb.{name}"] = rng.uniform(-bound, bound, (size, d))
        for h in range(shape.heads):
            for mname in MATRIX_NAMES[Kind(shape.mechanism)]:
                p[f"head{h}.{mname}"] = rng.uniform(-bound, bound, (d, d))
        p["w_o"] = rng.uniform(-bound, bound, (d, d * shape.heads))
        p["mlp.w1"] = rng.uniform(-bound, bound, (hid, d))
        p["mlp.b1"] = np.zeros(hid)
        p["mlp.w2"] = rng.uniform(-bound, bound, (1, hid))
        p["mlp.b2"] = np.zeros(1)
        return cls(shape, p)

    def names(self) -> list[str]:
        return list(self.params)


def model_logits(shape: ModelShape, params: dict, fields: dict[str, np.ndarray], key_mask: np.ndarray,
                 dropout: float = 0.0, rng: np.random.Generator | None = None):
    """Per-token logits ``(B, N)``. ``params`` may hold tensors or arrays."""
    x = None
    for name, ids in fields.items():
        e = ad.take_rows(params[f"emb.{name}"], ids)
        x = e if x is None else x + e
    kind = Kind(shape.mechanism)
    scale = 1.0 / math.sqrt(shape.d)
    outs = []
    for h in range(shape.heads):
        mats = {m: params[f"head{h}.{m}"] for m in MATRIX_NAMES[kind]}
        outs.append(BATCH_KERNELS[kind](x, mats, key_mask, scale))
    if len(outs) == 1:
        cat = outs[0]
        z = x + ad.einsum("bnc,dc->bnd", cat, params["w_o"])
    else:
        z = x
        d = shape.d
        for h, a in enumerate(outs):
            w = ad.select(params["w_o"], (slice(None), slice(h * d, (h + 1) * d)))
            z = z + ad.einsum("bnc,dc->bnd", a, w)
    hidden = ad.relu(ad.einsum("bnd,hd->bnh", z, params["mlp.w1"]) + params["mlp.b1"])
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        keep = (rng.random(ad._val(hidden).shape) >= dropout) / (1.0 - dropout)
        hidden = hidden * keep
    out = ad.einsum("bnh,oh->bno", hidden, params["mlp.w2"]) + params["mlp.b2"]
    b, n = key_mask.shape
    return ad.reshape(out, (b, n))


def gradcheck_mechanism(mechanism: str, n: int, d: int, seed: int = 0, eps: float = 1e-5) -> float:
    """Finite-difference check of a random scalar readout of one mechanism.

    ``mechanism`` is an attention kind or ``"layer"`` (a full one-layer model
    with a Strassen head). For triangular attention ``n`` is the grid side.
    Weights are drawn small enough to keep scores roughly within [-3, 3].
    """
    rng = np.random.default_rng(seed)
    if mechanism == "layer":
        shape = ModelShape("strassen", d, 1, {"sym": 5, "pos": n}, hidden=2 * d)
        model = Model.init(shape, rng)
        fields = {"sym": rng.integers(0, 5, (2, n)), "pos": np.tile(np.arange(n), (2, 1))}
        mask = np.ones((2, n), dtype=bool)
        mask[1, -1] = n == 1
        weights = rng.normal(size=(2, n))
        names = model.names()

        def f(*leaves):
            logits = model_logits(shape, dict(zip(names, leaves)), fields, mask)
            return ad.sum(logits * weights)

        return ad.fd_check(f, [model.params[k] for k in names], eps)
    kind = Kind(mechanism)
    tokens = n * n if kind is Kind.TRIANGULAR else n
    x = rng.normal(0.0, 0.5, (1, tokens, d))
    mats = [rng.normal(0.0, 1.0 / math.sqrt(d), (d, d)) for _ in MATRIX_NAMES[kind]]
    weights = rng.normal(size=(1, tokens, d))
    mask = np.ones((1, tokens), dtype=bool)
    scale = 1.0 / math.sqrt(d)

    def f(xt, *ms):
        out = BATCH_KERNELS[kind](xt, dict(zip(MATRIX_NAMES[kind], ms)), mask, scale)
        return ad.sum(out * weights)

    return ad.fd_check(f, [x] + mats, eps)
