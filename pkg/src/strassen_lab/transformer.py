"""One-layer transformer: heads, W_O combiner, residual, output MLP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .attention import AttentionParams, attend
from .tensor_core import MLPParams, ShapeError, as_matrix, mlp_eval

AUX = "<aux>"    # the blank symbol placed in the auxiliary token


@dataclass
class PositionalEncoding:
    """``p(i, sigma) = position(i) + symbol(sigma)``.

    ``symbol`` may be a mapping or a callable; an unknown symbol raises
    ``ValueError`` either way. The auxiliary symbol is ``AUX``.
    """

    dim: int
    position: Callable[[Hashable], np.ndarray]
    symbol: Mapping[Hashable, np.ndarray] | Callable[[Hashable], np.ndarray]

    def symbol_vector(self, sigma) -> np.ndarray:
        if callable(self.symbol):
            vec = self.symbol(sigma)
        else:
            try:
                vec = self.symbol[sigma]
            except KeyError:
                raise ValueError(f"unknown symbol {sigma!r}") from None
        return np.asarray(vec, dtype=np.float64)

    def __call__(self, pos, sigma) -> np.ndarray:
        vec = np.asarray(self.position(pos), dtype=np.float64) + self.symbol_vector(sigma)
        if vec.shape != (self.dim,):
            raise ShapeError(f"encoding of ({pos!r}, {sigma!r}) has shape {vec.shape}")
        return vec


@dataclass
class TransformerSpec:
    d: int
    heads: list[AttentionParams]
    w_o: np.ndarray
    mlp: MLPParams
    posenc: PositionalEncoding | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w_o = as_matrix(self.w_o)
        width = sum(h.out_dim for h in self.heads)
        if self.w_o.shape != (self.d, width):
            raise ShapeError(f"W_O has shape {self.w_o.shape}, expected {(self.d, width)}")
        for h in self.heads:
            if h.in_dim != self.d:
                raise ShapeError(f"head in-dim {h.in_dim} != d {self.d}")
        if self.mlp.in_dim != self.d:
            raise ShapeError(f"MLP in-dim {self.mlp.in_dim} != d {self.d}")

    @property
    def size(self) -> int:
        """``max(H, d, P)`` with ``P`` the number of MLP parameters."""
        return max(len(self.heads), self.d, self.mlp.size)


def encode(word: Sequence, spec: TransformerSpec, append_aux: bool = False,
           positions: Sequence | None = None) -> np.ndarray:
    """Map a symbol sequence to token vectors; positions default to 1..n."""
    pe = spec.posenc
    if pe is None:
        raise ValueError("spec has no positional encoding")
    word = list(word)
    if positions is None:
        positions = list(range(1, len(word) + 2))
    positions = list(positions)
    rows = [pe(positions[t], sigma) for t, sigma in enumerate(word)]
    if append_aux:
        rows.append(pe(positions[len(word)], AUX))
    if not rows:
        return np.zeros((0, spec.d))
    return np.vstack(rows)


def residual_stream(tokens, spec: TransformerSpec, strassen_path: str = "naive",
                    key_mask=None) -> np.ndarray:
    """``x_i + W_O [a_i^(1); ...; a_i^(H)]`` for every token."""
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.d:
        raise ShapeError(f"tokens have shape {x.shape}, expected (n, {spec.d})")
    heads = [attend(x, h, strassen_path=strassen_path, key_mask=key_mask) for h in spec.heads]
    return x + np.hstack(heads) @ spec.w_o.T


def forward(tokens, spec: TransformerSpec, strassen_path: str = "naive", key_mask=None,
            return_hidden: bool = False):
    """Per-token scalar output: first coordinate of ``mlp(x_i + W_O a_i)``."""
    z = residual_stream(tokens, spec, strassen_path, key_mask)
    y = mlp_eval(spec.mlp, z)[:, 0]
    return (y, z) if return_hidden else y


def readout_sign(y: float) -> int:
    """1 if ``y > 0`` else 0 (so ``sign(0) = 0``)."""
    if not math.isfinite(y):
        raise ValueError("readout of a non-finite value")
    return 1 if y > 0 else 0


def readout_nearest_int(y: float) -> int:
    """Round half away from zero."""
    if not math.isfinite(y):
        raise ValueError("readout of a non-finite value")
    return int(math.copysign(math.floor(abs(y) + 0.5), y))
