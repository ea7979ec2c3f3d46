"""Splitting VC dimension of small finite functions, by exhaustive search.

For ``f: S^n -> {0,1}`` and a position set ``A``, the split matrix has rows
indexed by assignments to ``A`` and columns by assignments to the rest.
Entry ``(w1, w2)`` is ``f`` of the merged word. ``split_vc`` is the largest
VC dimension of the column class over all ``A``.

Positions are 0-based throughout. The witness ``A`` reported is the
lexicographically smallest sorted tuple among the maximizers.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_BUDGET = 1 << 20


class BudgetExceeded(RuntimeError):
    """The exhaustive search would touch more truth-table entries than allowed."""


@dataclass
class FiniteFunction:
    alphabet: tuple
    n: int
    table: np.ndarray     # shape (|S|,) * n, entries 0/1

    def __post_init__(self):
        self.alphabet = tuple(self.alphabet)
        if len(set(self.alphabet)) != len(self.alphabet) or not self.alphabet:
            raise ValueError("alphabet must be non-empty with distinct symbols")
        t = np.asarray(self.table, dtype=np.uint8)
        s = len(self.alphabet)
        if t.size != s ** self.n:
            raise ValueError(f"truth table has {t.size} entries, expected {s ** self.n}")
        t = t.reshape((s,) * self.n)
        if t.max(initial=0) > 1:
            raise ValueError("truth table entries must be 0 or 1")
        self.table = t

    @classmethod
    def from_callable(cls, alphabet: Sequence, n: int, fn: Callable[..., int]) -> "FiniteFunction":
        alphabet = tuple(alphabet)
        vals = [int(bool(fn(*w))) for w in itertools.product(alphabet, repeat=n)]
        return cls(alphabet, n, np.array(vals, dtype=np.uint8))

    @property
    def entries(self) -> int:
        return len(self.alphabet) ** self.n

    def __call__(self, *word) -> int:
        idx = tuple(self.alphabet.index(s) for s in word)
        return int(self.table[idx])

    def restrict(self, position: int, symbol) -> "FiniteFunction":
        """Fix one argument, giving a function of arity ``n - 1``."""
        k = self.alphabet.index(symbol)
        return FiniteFunction(self.alphabet, self.n - 1, np.take(self.table, k, axis=position))


@dataclass
class SplitMatrix:
    positions: tuple[int, ...]       # A
    rest: tuple[int, ...]            # B
    matrix: np.ndarray               # (|S|^|A|, |S|^|B|)
    alphabet: tuple = ()

    def row_word(self, r: int) -> tuple:
        return _unrank(r, len(self.positions), self.alphabet)

    def col_word(self, c: int) -> tuple:
        return _unrank(c, len(self.rest), self.alphabet)


def _unrank(index: int, length: int, alphabet) -> tuple:
    s = len(alphabet)
    digits = []
    for _ in range(length):
        index, r = divmod(index, s)
        digits.append(alphabet[r])
    return tuple(reversed(digits))


def build_split_matrix(f: FiniteFunction, positions) -> SplitMatrix:
    a = tuple(sorted(set(int(p) for p in positions)))
    if any(p < 0 or p >= f.n for p in a):
        raise ValueError("position outside the function's arity")
    b = tuple(p for p in range(f.n) if p not in a)
    s = len(f.alphabet)
    mat = np.transpose(f.table, a + b).reshape(s ** len(a), s ** len(b))
    return SplitMatrix(a, b, mat, f.alphabet)


def _shatters(cols: np.ndarray, rows: Sequence[int]) -> bool:
    """``cols`` is (distinct columns, rows); checks all 2^|rows| patterns appear."""
    r = len(rows)
    if (1 << r) > cols.shape[0]:
        return False
    weights = 1 << np.arange(r, dtype=np.int64)
    codes = cols[:, list(rows)].astype(np.int64) @ weights
    return np.unique(codes).size == (1 << r)


def vc_dim_of_columns(sm: SplitMatrix | np.ndarray):
    """Return ``(value, shattered rows, certificate)``.

    ``certificate`` maps each pattern (tuple of bits over the shattered rows)
    to a column index realizing it. Row subsets are searched by size
    ascending, extending only subsets that were themselves shattered.
    """
    mat = sm.matrix if isinstance(sm, SplitMatrix) else np.asarray(sm, dtype=np.uint8)
    if mat.ndim != 2 or mat.size == 0:
        return 0, (), {(): 0}
    cols, first = np.unique(mat.T, axis=0, return_index=True)
    n_rows = mat.shape[0]
    frontier: list[tuple[int, ...]] = [()]
    best: tuple[int, ...] = ()
    while frontier:
        nxt = []
        for s in frontier:
            start = s[-1] + 1 if s else 0
            for r in range(start, n_rows):
                cand = s + (r,)
                if _shatters(cols, cand):
                    nxt.append(cand)
        if nxt:
            best = nxt[0]
        frontier = nxt
    return len(best), best, _certificate(mat, best)


def _certificate(mat: np.ndarray, rows: tuple[int, ...]) -> dict:
    cert = {}
    for c in range(mat.shape[1]):
        pat = tuple(int(v) for v in mat[list(rows), c])
        cert.setdefault(pat, c)
    return {pat: cert[pat] for pat in sorted(cert)} if rows else {(): 0}


@dataclass
class SplitVCReport:
    value: int
    witness: tuple[int, ...]
    rows: list[tuple]                            # shattered row words
    certificate: list[tuple[tuple, tuple]]       # (pattern, column word)
    per_set: dict = field(default_factory=dict)  # A -> VC dimension of its columns

    def validate(self, f: FiniteFunction) -> bool:
        """Re-evaluate every certificate column on the shattered rows."""
        if len(self.certificate) != 2 ** self.value:
            return False
        rest = tuple(p for p in range(f.n) if p not in self.witness)
        for pattern, col in self.certificate:
            for bit, row in zip(pattern, self.rows):
                if f(*merge(self.witness, row, rest, col)) != bit:
                    return False
        return True

    def to_json(self) -> str:
        return json.dumps({
            "value": self.value,
            "witness": list(self.witness),
            "rows": [list(r) for r in self.rows],
            "certificate": [{"pattern": list(p), "column": list(c)} for p, c in self.certificate],
        })


def merge(positions, w1, rest, w2) -> tuple:
    """The word with ``w1`` on ``positions`` and ``w2`` on ``rest``."""
    word = [None] * (len(positions) + len(rest))
    for p, s in zip(positions, w1):
        word[p] = s
    for p, s in zip(rest, w2):
        word[p] = s
    return tuple(word)


def split_vc(f: FiniteFunction, budget: int = DEFAULT_BUDGET) -> SplitVCReport:
    if f.entries > budget:
        raise BudgetExceeded(f"{f.entries} truth-table entries per position set exceed the budget {budget}")
    best = None
    per_set = {}
    for size in range(f.n + 1):
        for a in itertools.combinations(range(f.n), size):
            sm = build_split_matrix(f, a)
            value, rows, cert = vc_dim_of_columns(sm)
            per_set[a] = value
            if best is None or value > best[0] or (value == best[0] and a < best[1]):
                best = (value, a, sm, rows, cert)
    value, a, sm, rows, cert = best
    return SplitVCReport(
        value=value, witness=a,
        rows=[sm.row_word(r) for r in rows],
        certificate=[(pat, sm.col_word(c)) for pat, c in cert.items()],
        per_set=per_set,
    )


# ---------------------------------------------------------------- lemma certificates

def ind_function(n: int) -> Callable[..., int]:
    """``Ind_n(p, q_1..q_n) = [q_p == 1]`` over the alphabet ``1..n``."""
    return lambda p, *q: int(q[p - 1] == 1)


def sum2_function(ell: int, modulus: int) -> Callable[..., int]:
    """1 iff some ``p_j + p_k = -1 (mod modulus)``, ``j, k`` ranging over all positions."""
    def f(*p):
        return int(any((u + v + 1) % modulus == 0 for u in p for v in p))
    return f


def sum2_alphabet(modulus: int) -> tuple[int, ...]:
    return tuple(v for v in range(1, modulus) if v != modulus - 2)


def disj_function(m: int) -> Callable[..., int]:
    return lambda *w: int(any(w[i] and w[m + i] for i in range(m)))


@dataclass
class LemmaCertificate:
    tag: str
    size: int
    positions: tuple[int, ...]
    rows: list[tuple]
    columns: dict            # pattern -> column word
    alphabet: tuple
    passed: bool
    bad: list = field(default_factory=list)


def lemma_certificate(tag: str, size: int) -> LemmaCertificate:
    """Explicit shattered rows and columns for the Ind, Sum2 and Disj lower bounds."""
    patterns = list(itertools.product((0, 1), repeat=size if tag != "Sum2" else size // 2))
    if tag == "Ind":
        n = size
        fn, alphabet, positions = ind_function(n), tuple(range(1, n + 1)), (0,)
        rows = [(i,) for i in range(1, n + 1)]
        columns = {c: tuple(1 if ci else 2 for ci in c) for c in patterns}
    elif tag == "Sum2":
        ell = size
        if ell % 2:
            raise ValueError("Sum2 needs an even length")
        half = ell // 2
        fn, alphabet = sum2_function(ell, 2 * ell), sum2_alphabet(2 * ell)
        positions = tuple(range(half))
        rows = [tuple(2 * i if t == i else 1 for t in range(1, half + 1)) for i in range(1, half + 1)]
        columns = {c: tuple(2 * ell - 2 * i - 1 if c[i - 1] else 1 for i in range(1, half + 1))
                   for c in patterns}
    elif tag == "Disj":
        m = size
        fn, alphabet, positions = disj_function(m), (0, 1), tuple(range(m))
        rows = [tuple(int(t == i) for t in range(m)) for i in range(m)]
        columns = {c: tuple(c) for c in patterns}
    else:
        raise ValueError(f"unknown lemma {tag!r}")
    arity = len(rows[0]) + len(next(iter(columns.values())))
    rest = tuple(p for p in range(arity) if p not in positions)
    bad = []
    for c, col in columns.items():
        if any(s not in alphabet for s in col):
            bad.append((c, "column symbol outside the alphabet"))
            continue
        for bit, row in zip(c, rows):
            if any(s not in alphabet for s in row):
                bad.append((c, "row symbol outside the alphabet"))
                break
            if fn(*merge(positions, row, rest, col)) != bit:
                bad.append((c, row))
                break
    return LemmaCertificate(tag, size, positions, rows, columns, alphabet, not bad, bad)


def check_lemma_certificate(tag: str, size: int) -> bool:
    return lemma_certificate(tag, size).passed


def lemma_function(tag: str, size: int) -> FiniteFunction:
    """Full truth table of the lemma's function (small sizes only)."""
    if tag == "Ind":
        return FiniteFunction.from_callable(range(1, size + 1), size + 1, ind_function(size))
    if tag == "Sum2":
        return FiniteFunction.from_callable(sum2_alphabet(2 * size), size, sum2_function(size, 2 * size))
    if tag == "Disj":
        return FiniteFunction.from_callable((0, 1), 2 * size, disj_function(size))
    raise ValueError(f"unknown lemma {tag!r}")


# ---------------------------------------------------------------- text format

def parse_truth_table(text: str) -> FiniteFunction:
    """First line ``"|S| n"``; then one line per word: ``n`` symbols and the bit."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0]) != 2:
        raise ValueError("header must be '|S| n'")
    size, n = int(lines[0][0]), int(lines[0][1])
    if size < 1 or n < 0:
        raise ValueError("bad header values")
    rows = {}
    for ln in lines[1:]:
        if len(ln) != n + 1:
            raise ValueError(f"expected {n} symbols and a bit, got {' '.join(ln)!r}")
        word, bit = tuple(ln[:n]), ln[n]
        if bit not in ("0", "1"):
            raise ValueError(f"output bit must be 0 or 1, got {bit!r}")
        if word in rows:
            raise ValueError(f"duplicate word {' '.join(word)!r}")
        rows[word] = int(bit)
    symbols = sorted({s for w in rows for s in w})
    if all(s.lstrip("-").isdigit() for s in symbols):
        symbols = sorted(symbols, key=int)
    if len(symbols) > size:
        raise ValueError(f"{len(symbols)} distinct symbols but |S| = {size}")
    if len(symbols) < size:
        if all(s.isdigit() for s in symbols) and all(int(s) < size for s in symbols):
            symbols = [str(v) for v in range(size)]
        else:
            raise ValueError("cannot infer the full alphabet")
    if len(rows) != size ** n:
        raise ValueError(f"table has {len(rows)} words, expected {size ** n}")
    alphabet = tuple(int(s) if s.lstrip("-").isdigit() else s for s in symbols)
    index = {s: k for k, s in enumerate(symbols)}
    table = np.zeros((size,) * n, dtype=np.uint8)
    for word, bit in rows.items():
        table[tuple(index[s] for s in word)] = bit
    return FiniteFunction(alphabet, n, table)


def format_truth_table(f: FiniteFunction) -> str:
    out = [f"{len(f.alphabet)} {f.n}"]
    for w in itertools.product(f.alphabet, repeat=f.n):
        out.append(" ".join(str(s) for s in w) + f" {f(*w)}")
    return "\n".join(out) + "\n"
