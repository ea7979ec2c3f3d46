"""Hand-set one-layer Strassen-attention transformers for the four tasks.

Each builder returns a :class:`TransformerSpec` whose head projections give
score vectors ``f, g, h`` with a closed-form triple score. Every token
attends to a single ``(j, k)`` pair, up to a softmax tail of about
``e^-MARGIN_TARGET``, and the output MLP checks a few equalities on the
carried values.

All vectors are multiplied by a sharpness factor ``kappa``. This makes the
gap between the best and second-best pair at least ``MARGIN_TARGET`` in
log units even for tiny inputs. A common positive factor never moves the
argmax.

Theory instances are 1-based (tokens, function values, colors). Stored
datasets are 0-based; :func:`from_task_instance` converts between the two.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .attention import AttentionParams, Kind, strassen_scores
from .data import TaskInstance
from .oracles import MASK, bool_compose, compose, match3, quotient_compose
from .tensor_core import MLPParams
from .transformer import PositionalEncoding, TransformerSpec, encode, forward, readout_nearest_int, readout_sign

MARGIN_TARGET = 40.0
TASK_TAGS = ("funccomp", "binrel", "match3", "quotient")


# ---------------------------------------------------------------- instances

@dataclass
class FuncCompInstance:
    g: tuple
    h: tuple
    x: int

    @property
    def n(self) -> int:
        return len(self.g)

    def word(self) -> list[int]:
        return list(self.g) + list(self.h) + [self.x]


@dataclass
class BinRelInstance:
    a: np.ndarray
    b: np.ndarray

    @property
    def m(self) -> int:
        return self.a.shape[0]


@dataclass
class Match3Instance:
    p: tuple
    modulus: int


@dataclass
class QuotientInstance:
    a: np.ndarray
    b: np.ndarray
    col: tuple      # colors in [1, m]

    @property
    def m(self) -> int:
        return self.a.shape[0]


def _plain(inst) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else list(v) if isinstance(v, tuple) else v)
            for k, v in vars(inst).items()}


# ---------------------------------------------------------------- helpers

def _kappa(gap: float, scale: float, target: float) -> float:
    """Factor on each of f, g, h so that ``kappa^2 * gap * scale >= target``."""
    return math.sqrt(max(1.0, target / (gap * scale)))


def _rows(spec_rows: list[dict[int, float]], d: int) -> np.ndarray:
    w = np.zeros((len(spec_rows), d))
    for r, entries in enumerate(spec_rows):
        for c, v in entries.items():
            w[r, c] += v
    return w


def _strassen_head(wf, wg, wh, v1, v2, kappa: float) -> AttentionParams:
    return AttentionParams(Kind.STRASSEN, {"wf": kappa * wf, "wg": kappa * wg, "wh": kappa * wh,
                                           "v1": v1, "v2": v2})


def _grid_positions(m: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(1, m + 1) for j in range(1, m + 1)]


# ---------------------------------------------------------------- builders

def build_funccomp(n: int, indicator: bool = False, target: float = MARGIN_TARGET) -> TransformerSpec:
    """Output ``h(g(x))`` at token ``2n+1`` of ``g(1..n) h(1..n) x``.

    Encoding ``(i, i^2, phi, phi^2, 1, 0, 0)``; the last coordinate receives
    the attended value. With ``indicator`` the MLP outputs
    ``relu(1.5 - h(g(x)))``, positive exactly when ``h(g(x)) = 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = 7
    I, I2, PHI, PHI2, ONE = 0, 1, 2, 3, 4
    wf = n * _rows([{PHI2: 1}, {PHI: 2}, {ONE: -1}, {}, {}, {}], d)
    wg = n * _rows([{ONE: -1}, {I: 1}, {I2: 1}, {PHI2: 1}, {PHI: 2}, {ONE: -1}], d)
    wh = n * _rows([{}, {}, {}, {ONE: -1}, {I: 1, ONE: -n}, {I2: 1, I: -2 * n, ONE: n * n}], d)
    v1 = _rows([{ONE: 1}, {}, {}, {}, {}, {}], d)
    v2 = _rows([{PHI: 1}, {}, {}, {}, {}, {}], d)
    scale = 1.0 / math.sqrt(d)
    kappa = _kappa(n * n, scale, target)
    head = _strassen_head(wf, wg, wh, v1, v2, kappa)
    w_o = np.zeros((d, 6))
    w_o[6, 0] = 1.0
    read = np.zeros((1, d))
    read[0, 6] = 1.0
    if indicator:
        mlp = MLPParams([(-read, [1.5]), (np.ones((1, 1)), [0.0])])
    else:
        mlp = MLPParams([(read, [0.0])])
    pe = PositionalEncoding(
        d,
        position=lambda i: np.array([i, i * i, 0, 0, 1, 0, 0], dtype=float),
        symbol=lambda s: np.array([0, 0, s, s * s, 0, 0, 0], dtype=float),
    )
    return TransformerSpec(d, [head], w_o, mlp, pe,
                           meta={"task": "funccomp", "n": n, "indicator": indicator, "kappa": kappa})


def build_binrel(m: int, target: float = MARGIN_TARGET) -> TransformerSpec:
    """Sign of the output at grid token ``(i, j)`` equals ``(B o A)_ij``.

    Encoding ``(A_ij, B_ij, i, i^2, j, j^2, 1)`` plus six free coordinates
    that receive ``(c, d, k, l, A_cd, B_kl)`` from the attended pair.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    d = 13
    A, B, I, I2, J, J2, ONE = range(7)
    n2 = float(m) ** 4      # n^2 with n = m^2
    wf = n2 * _rows([
        {I2: 1}, {I: 2}, {ONE: -1},
        {J2: 1}, {J: 2}, {ONE: -1},
        {}, {}, {}, {}, {},
        {ONE: m ** -2}, {ONE: m ** -3}, {ONE: m ** -4}, {ONE: m ** -5}], d)
    wg = n2 * _rows([
        {ONE: -1}, {I: 1}, {I2: 1},
        {}, {}, {},
        {J2: 1}, {J: 2}, {ONE: -1},
        {ONE: 1}, {A: 1},
        {I: 1}, {J: 1}, {}, {}], d)
    wh = n2 * _rows([
        {}, {}, {},
        {ONE: -1}, {J: 1}, {J2: 1},
        {ONE: -1}, {I: 1}, {I2: 1},
        {B: 1}, {ONE: 1},
        {}, {}, {I: 1}, {J: 1}], d)
    v1 = _rows([{I: 1}, {J: 1}, {ONE: 1}, {ONE: 1}, {A: 1}, {ONE: 1}] + [{}] * 9, d)
    v2 = _rows([{ONE: 1}, {ONE: 1}, {I: 1}, {J: 1}, {ONE: 1}, {B: 1}] + [{}] * 9, d)
    scale = 1.0 / math.sqrt(d)
    kappa = _kappa(float(m) ** 3, scale, target)
    head = _strassen_head(wf, wg, wh, v1, v2, kappa)
    w_o = np.zeros((d, 15))
    for t in range(6):
        w_o[7 + t, t] = 1.0
    C, D, K, L, AC, BK = range(7, 13)
    hidden = _rows([{C: 1, I: -1}, {I: 1, C: -1}, {L: 1, J: -1}, {J: 1, L: -1},
                    {D: 1, K: -1}, {K: 1, D: -1}, {AC: 1}, {BK: 1}], d)
    out = np.array([[-1, -1, -1, -1, -1, -1, 1, 1]], dtype=float)
    mlp = MLPParams([(hidden, np.zeros(8)), (out, [-1.5])])
    pe = PositionalEncoding(
        d,
        position=lambda ij: np.array([0, 0, ij[0], ij[0] ** 2, ij[1], ij[1] ** 2, 1] + [0] * 6, dtype=float),
        symbol=lambda ab: np.array([ab[0], ab[1]] + [0] * 11, dtype=float),
    )
    return TransformerSpec(d, [head], w_o, mlp, pe, meta={"task": "binrel", "m": m, "kappa": kappa})


def build_match3(n: int, m: int, include_zero: bool = False, target: float = MARGIN_TARGET) -> TransformerSpec:
    """Match3 over ``n`` values in ``[0, m)``: one head per target sum.

    Heads look for ``p_i + p_j + p_k = S`` with ``S`` in ``(m, 2m)``, plus
    ``S = 0`` when ``include_zero`` (needed once zeros may occur). The
    encoding is ``(i, p, p^2, 1)`` and head ``h`` writes ``p_j + p_k`` into
    coordinate ``4 + h``.
    """
    if n < 1 or m < 2:
        raise ValueError("need n >= 1 and m >= 2")
    sums = ([0] if include_zero else []) + [m, 2 * m]
    d = 8
    I, P, P2, ONE = range(4)
    scale = 1.0 / math.sqrt(d)
    kappa = _kappa(float(n), scale, target)
    n2 = float(n) ** 2
    heads = []
    for total in sums:
        s = total / 3.0
        q = {P: 1, ONE: -s}
        mq = {P: -1, ONE: s}
        q2 = {P2: 1, P: -2 * s, ONE: s * s}
        mq2 = {k: -v for k, v in q2.items()}
        two_q = {k: 2 * v for k, v in q.items()}
        wf = n2 * _rows([mq, mq, {}, mq2, {}, {}, {}, {}], d)
        wg = n2 * _rows([two_q, {}, mq, {ONE: 1}, mq2, {ONE: 1}, {I: 1 / n2}, {ONE: 1}], d)
        wh = n2 * _rows([{}, two_q, two_q, {}, {ONE: 1}, mq2, {ONE: 1}, {I: 1 / n ** 3}], d)
        v1 = _rows([{P: 1}, {ONE: 1}] + [{}] * 6, d)
        v2 = _rows([{ONE: 1}, {P: 1}] + [{}] * 6, d)
        heads.append(_strassen_head(wf, wg, wh, v1, v2, kappa))
    w_o = np.zeros((d, 8 * len(sums)))
    hidden, out = [], []
    for h, total in enumerate(sums):
        w_o[4 + h, 8 * h] = 1.0
        w_o[4 + h, 8 * h + 1] = 1.0
        for shift, coef in ((1, 1.0), (0, -2.0), (-1, 1.0)):
            row = np.zeros(d)
            row[P] = 1.0
            row[4 + h] = 1.0
            hidden.append((row, shift - total))
            out.append(coef)
    mlp = MLPParams([(np.array([r for r, _ in hidden]), np.array([b for _, b in hidden])),
                     (np.array([out]), [-0.5])])
    pe = PositionalEncoding(
        d,
        position=lambda i: np.array([i, 0, 0, 1, 0, 0, 0, 0], dtype=float),
        symbol=lambda p: np.array([0, p, p * p, 0, 0, 0, 0, 0], dtype=float),
    )
    return TransformerSpec(d, heads, w_o, mlp, pe,
                           meta={"task": "match3", "n": n, "m": m, "sums": sums, "kappa": kappa})


def build_quotient(m: int, target: float = MARGIN_TARGET) -> TransformerSpec:
    """Sign of the output at ``(i, j)`` equals ``(B o A / col)_ij``.

    Triple score (up to a positive factor)::

        -(i-c)^2 - (col(d)-col(k))^2 - (l-j)^2 + A_cd + B_kl
        + (d-k)^2 / m^3 + (c m^3 + d m^2 + k m + l) / m^8

    Encoding ``(A, B, i, i^2, j, j^2, 1, col(i), col(i)^2, col(j), col(j)^2)``
    plus eight free coordinates receiving
    ``(c, d, k, l, A_cd, B_kl, col(d), col(k))``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    d = 19
    A, B, I, I2, J, J2, ONE, CI, CI2, CJ, CJ2 = range(11)
    m3 = float(m) ** 3
    wf = _rows([
        {I2: 1}, {I: 2}, {ONE: -1}, {ONE: m ** -5.0}, {ONE: m ** -6.0},
        {}, {}, {}, {}, {}, {}, {}, {},
        {J2: 1}, {J: 2}, {ONE: -1}, {ONE: m ** -7.0}, {ONE: m ** -8.0}], d)
    wg = _rows([
        {ONE: -1}, {I: 1}, {I2: 1}, {I: 1}, {J: 1},
        {CJ2: 1}, {CJ: 2}, {ONE: -1}, {ONE: 1}, {A: 1}, {J2: 1 / m3}, {J: -2 / m3}, {ONE: 1 / m3},
        {}, {}, {}, {}, {}], d)
    wh = _rows([
        {}, {}, {}, {}, {},
        {ONE: -1}, {CI: 1}, {CI2: 1}, {B: 1}, {ONE: 1}, {ONE: 1}, {I: 1}, {I2: 1},
        {ONE: -1}, {J: 1}, {J2: 1}, {I: 1}, {J: 1}], d)
    v1 = _rows([{I: 1}, {J: 1}, {ONE: 1}, {ONE: 1}, {A: 1}, {ONE: 1}, {CJ: 1}, {ONE: 1}] + [{}] * 10, d)
    v2 = _rows([{ONE: 1}, {ONE: 1}, {I: 1}, {J: 1}, {ONE: 1}, {B: 1}, {ONE: 1}, {CI: 1}] + [{}] * 10, d)
    scale = 1.0 / math.sqrt(d)
    kappa = _kappa(float(m) ** -8, scale, target)
    head = _strassen_head(wf, wg, wh, v1, v2, kappa)
    w_o = np.zeros((d, 18))
    for t in range(8):
        w_o[11 + t, t] = 1.0
    C, D, K, L, AC, BK, COLD, COLK = range(11, 19)
    hidden = _rows([{C: 1, I: -1}, {I: 1, C: -1}, {L: 1, J: -1}, {J: 1, L: -1},
                    {COLD: 1, COLK: -1}, {COLK: 1, COLD: -1},
                    {D: 1, K: -1}, {D: 1, K: -1}, {K: 1, D: -1}, {K: 1, D: -1},
                    {AC: 1}, {BK: 1}], d)
    bias = np.zeros(12)
    bias[7] = bias[9] = -1.0
    # min(|d-k|, 1) = relu(d-k) - relu(d-k-1) + relu(k-d) - relu(k-d-1)
    out = np.array([[-1, -1, -1, -1, -1, -1, 1, -1, 1, -1, 1, 1]], dtype=float)
    mlp = MLPParams([(hidden, bias), (out, [-2.5])])
    pe = PositionalEncoding(
        d,
        position=lambda ij: np.array([0, 0, ij[0], ij[0] ** 2, ij[1], ij[1] ** 2, 1] + [0] * 12, dtype=float),
        symbol=lambda s: np.array([s[0], s[1], 0, 0, 0, 0, 0, s[2], s[2] ** 2, s[3], s[3] ** 2] + [0] * 8,
                                  dtype=float),
    )
    return TransformerSpec(d, [head], w_o, mlp, pe, meta={"task": "quotient", "m": m, "kappa": kappa})


# ---------------------------------------------------------------- encoding and oracles

def tokens_for(spec: TransformerSpec, inst) -> np.ndarray:
    if isinstance(inst, FuncCompInstance):
        return encode(inst.word(), spec)
    if isinstance(inst, Match3Instance):
        return encode(list(inst.p), spec)
    if isinstance(inst, BinRelInstance):
        pos = _grid_positions(inst.m)
        word = [(inst.a[i - 1, j - 1], inst.b[i - 1, j - 1]) for i, j in pos]
        return encode(word, spec, positions=pos)
    if isinstance(inst, QuotientInstance):
        pos = _grid_positions(inst.m)
        col = inst.col
        word = [(inst.a[i - 1, j - 1], inst.b[i - 1, j - 1], col[i - 1], col[j - 1]) for i, j in pos]
        return encode(word, spec, positions=pos)
    raise TypeError(f"unsupported instance {type(inst).__name__}")


def expected_labels(inst, indicator: bool = False) -> list[int]:
    """Brute-force labels for a theory instance, in token order."""
    if isinstance(inst, FuncCompInstance):
        v = compose(inst.g, inst.h, inst.x)
        return [int(v == 1) if indicator else v]
    if isinstance(inst, BinRelInstance):
        return [v for row in bool_compose(inst.a.tolist(), inst.b.tolist()) for v in row]
    if isinstance(inst, Match3Instance):
        return match3(list(inst.p), inst.modulus)
    if isinstance(inst, QuotientInstance):
        return [v for row in quotient_compose(inst.a.tolist(), inst.b.tolist(), list(inst.col)) for v in row]
    raise TypeError(f"unsupported instance {type(inst).__name__}")


def construction_outputs(spec: TransformerSpec, inst, strassen_path: str = "naive") -> list[int]:
    """Run the construction and apply its readout."""
    y = forward(tokens_for(spec, inst), spec, strassen_path=strassen_path)
    if isinstance(inst, FuncCompInstance):
        last = float(y[-1])
        return [readout_sign(last) if spec.meta.get("indicator") else readout_nearest_int(last)]
    return [readout_sign(float(v)) for v in y]


def _query_tokens(inst) -> list[int]:
    if isinstance(inst, FuncCompInstance):
        return [2 * inst.n]
    if isinstance(inst, Match3Instance):
        return list(range(len(inst.p)))
    return list(range(inst.m * inst.m))


def exact_keys(inst, head_index: int = 0, sums=None) -> dict[int, np.ndarray]:
    """Integer score keys ``[query] -> (N, N)`` proportional to the float scores.

    These come from the closed forms, with no exponentials or projections.
    They are used to check the float argmax independently.
    """
    out = {}
    if isinstance(inst, FuncCompInstance):
        n = inst.n
        phi = np.array(inst.word(), dtype=np.int64)
        t = np.arange(1, 2 * n + 2, dtype=np.int64)
        for i in _query_tokens(inst):
            out[i] = -((phi[i] - t)[:, None] ** 2 + (phi[:, None] - (t[None, :] - n)) ** 2)
        return out
    if isinstance(inst, Match3Instance):
        n = len(inst.p)
        p = np.array(inst.p, dtype=np.int64)
        total = sums[head_index]
        t = np.arange(1, n + 1, dtype=np.int64)
        for i in range(n):
            s = p[i] + p[:, None] + p[None, :] - total
            out[i] = -(s ** 2) * n ** 3 + t[:, None] * n + t[None, :]
        return out
    m = inst.m
    idx = np.array(_grid_positions(m), dtype=np.int64)
    c, dd = idx[:, 0][:, None], idx[:, 1][:, None]
    k, ell = idx[:, 0][None, :], idx[:, 1][None, :]
    a = inst.a.astype(np.int64).reshape(-1)[:, None]
    b = inst.b.astype(np.int64).reshape(-1)[None, :]
    tie = c * m ** 3 + dd * m ** 2 + k * m + ell
    if isinstance(inst, BinRelInstance):
        for q, (i, j) in enumerate(idx):
            integral = -(i - c) ** 2 - (dd - k) ** 2 - (ell - j) ** 2 + a + b
            out[q] = integral * m ** 5 + tie
        return out
    col = np.array(inst.col, dtype=np.int64)
    cold, colk = col[idx[:, 1] - 1][:, None], col[idx[:, 0] - 1][None, :]
    for q, (i, j) in enumerate(idx):
        integral = -(i - c) ** 2 - (cold - colk) ** 2 - (ell - j) ** 2 + a + b
        out[q] = (integral * m ** 3 + (dd - k) ** 2) * m ** 5 + tie
    return out


def witness_ok(inst, query: int, pair: tuple[int, int], label: int, total=None) -> bool:
    """Check the selected 0-based token pair against the task's witness rule."""
    j, k = pair
    if isinstance(inst, FuncCompInstance):
        return (j + 1, k + 1) == (inst.x, inst.n + inst.g[inst.x - 1])
    if isinstance(inst, Match3Instance):
        p = inst.p
        best = min(abs(p[query] + u + v - total) for u in p for v in p)
        return abs(p[query] + p[j] + p[k] - total) == best
    m = inst.m
    i, jj = divmod(query, m)
    c, d = divmod(j, m)
    kk, ell = divmod(k, m)
    base = c == i and ell == jj and inst.a[c, d] == 1 and inst.b[kk, ell] == 1
    if isinstance(inst, BinRelInstance):
        return (base and d == kk) == bool(label)
    return (base and inst.col[d] == inst.col[kk] and d != kk) == bool(label)


# ---------------------------------------------------------------- data boundary

def from_task_instance(inst: TaskInstance):
    """Map a stored 0-based instance to ``(theory instance, labels, indicator)``.

    ``labels`` keeps ``MASK`` entries so callers can skip them.
    """
    x = list(inst.x)
    if inst.task == "funccomp":
        f = [v + 1 for v in x[1:]]
        return FuncCompInstance(tuple(f), tuple(f), 1), list(inst.y), True
    m = inst.meta.get("m")
    if inst.task == "binrel":
        r = np.array(x, dtype=np.int64).reshape(m, m)
        return BinRelInstance(r, r.copy()), list(inst.y), False
    if inst.task == "match3":
        return Match3Instance(tuple(x), int(inst.meta["M"])), list(inst.y), False
    if inst.task == "quotient":
        r = np.array(x[:m * m], dtype=np.int64).reshape(m, m)
        col = tuple(v + 1 for v in x[m * m:])
        return QuotientInstance(r, r.T.copy(), col), list(inst.y), False
    raise ValueError(f"no construction for task {inst.task!r}")


def spec_for(inst, indicator: bool = False) -> TransformerSpec:
    if isinstance(inst, FuncCompInstance):
        return build_funccomp(inst.n, indicator=indicator)
    if isinstance(inst, BinRelInstance):
        return build_binrel(inst.m)
    if isinstance(inst, Match3Instance):
        return build_match3(len(inst.p), inst.modulus, include_zero=0 in inst.p)
    if isinstance(inst, QuotientInstance):
        return build_quotient(inst.m)
    raise TypeError(f"unsupported instance {type(inst).__name__}")


# ---------------------------------------------------------------- verification

@dataclass
class ConstructionReport:
    task: str
    tried: int = 0
    exact: int = 0
    max_margin: float = 0.0
    min_margin: float = math.inf
    argmax_mismatches: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.exact == self.tried and not self.failures and self.argmax_mismatches == 0

    def to_json(self) -> str:
        rec = asdict(self)
        if not math.isfinite(rec["min_margin"]):
            rec["min_margin"] = None
        return json.dumps(rec)


def _head_margins(tokens, spec: TransformerSpec, inst, report: ConstructionReport):
    queries = _query_tokens(inst)
    sums = spec.meta.get("sums")
    for hidx, head in enumerate(spec.heads):
        scores = strassen_scores(tokens, head) * head.scale
        keys = exact_keys(inst, hidx, sums)
        for q in queries:
            flat = scores[q].reshape(-1)
            top2 = np.partition(flat, -2)[-2:] if flat.size > 1 else np.array([-np.inf, flat[0]])
            margin = float(top2[1] - top2[0])
            report.max_margin = max(report.max_margin, margin)
            report.min_margin = min(report.min_margin, margin)
            got = int(np.argmax(flat))
            want = int(np.argmax(keys[q].reshape(-1)))
            if got != want:
                report.argmax_mismatches += 1
                continue
            if not isinstance(inst, Match3Instance) and not isinstance(inst, FuncCompInstance):
                label = expected_labels(inst)[q]
            else:
                label = None
            pair = divmod(got, scores.shape[1])
            total = sums[hidx] if sums else None
            if not witness_ok(inst, q, pair, label, total):
                report.argmax_mismatches += 1


def verify_construction(task: str, spec: TransformerSpec | None, instances: Iterable,
                        strassen_path: str = "naive", check_argmax: bool = True) -> ConstructionReport:
    """Run the construction on every instance and compare with the oracle.

    ``instances`` may hold theory instances or stored ``TaskInstance`` records
    (converted with :func:`from_task_instance`). With ``spec=None`` a spec is
    built (and cached) per instance size.
    """
    if task not in TASK_TAGS:
        raise ValueError(f"unknown task {task!r}")
    report = ConstructionReport(task)
    cache: dict = {}
    for raw in instances:
        labels = None
        indicator = bool(spec.meta.get("indicator")) if spec is not None else False
        inst = raw
        if isinstance(raw, TaskInstance):
            inst, labels, indicator = from_task_instance(raw)
        use = spec
        if use is None:
            key = (type(inst).__name__, len(inst.p) if isinstance(inst, Match3Instance) else
                   inst.n if isinstance(inst, FuncCompInstance) else inst.m,
                   getattr(inst, "modulus", None), indicator,
                   isinstance(inst, Match3Instance) and 0 in inst.p)
            if key not in cache:
                cache[key] = spec_for(inst, indicator)
            use = cache[key]
        if labels is None:
            labels = expected_labels(inst, indicator)
        got = construction_outputs(use, inst, strassen_path)
        report.tried += 1
        mismatch = any(e != MASK and e != g for e, g in zip(labels, got))
        if mismatch:
            report.failures.append((_plain(inst), labels, got))
        else:
            report.exact += 1
        if check_argmax:
            _head_margins(tokens_for(use, inst), use, inst, report)
    return report


# ---------------------------------------------------------------- random theory instances

def random_instances(task: str, size: int, count: int, rng: np.random.Generator, modulus: int | None = None):
    """Random 1-based theory instances; ``size`` is n (funccomp, match3) or m (grids)."""
    out = []
    for _ in range(count):
        if task == "funccomp":
            g = tuple(int(v) for v in rng.integers(1, size + 1, size))
            h = tuple(int(v) for v in rng.integers(1, size + 1, size))
            out.append(FuncCompInstance(g, h, int(rng.integers(1, size + 1))))
        elif task == "binrel":
            dens = rng.uniform(0.1, 0.7)
            a = (rng.random((size, size)) < dens).astype(np.int64)
            b = (rng.random((size, size)) < dens).astype(np.int64)
            out.append(BinRelInstance(a, b))
        elif task == "match3":
            mod = modulus or 2 * size - 2
            out.append(Match3Instance(tuple(int(v) for v in rng.integers(1, mod, size)), mod))
        elif task == "quotient":
            dens = rng.uniform(0.1, 0.7)
            a = (rng.random((size, size)) < dens).astype(np.int64)
            b = (rng.random((size, size)) < dens).astype(np.int64)
            col = tuple(int(v) for v in rng.integers(1, size + 1, size))
            out.append(QuotientInstance(a, b, col))
        else:
            raise ValueError(f"unknown task {task!r}")
    return out


def exhaustive_binrel(m: int = 2):
    """Every pair of ``m x m`` boolean matrices."""
    cells = m * m
    mats = [np.array([(v >> t) & 1 for t in range(cells)], dtype=np.int64).reshape(m, m)
            for v in range(2 ** cells)]
    return [BinRelInstance(a, b) for a in mats for b in mats]
