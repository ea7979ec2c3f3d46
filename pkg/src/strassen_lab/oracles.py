"""Brute-force reference labelers, written straight from the task definitions.

Nothing here shares code with the generators or the constructions; these
loops are the ground truth both are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

MASK = -100


class MalformedInstance(ValueError):
    pass


@dataclass(frozen=True)
class TaskOracleResult:
    labels: tuple[int, ...]


def compose(g, h, x: int) -> int:
    """``h(g(x))`` for 1-based tables ``g, h: [n] -> [n]``."""
    return h[g[x - 1] - 1]


def bool_compose(a, b) -> list[list[int]]:
    """``(B o A)_ij = OR_k (A_ik AND B_kj)``, O(m^3)."""
    m = len(a)
    out = []
    for i in range(m):
        row = []
        for j in range(m):
            hit = 0
            for k in range(m):
                if a[i][k] and b[k][j]:
                    hit = 1
                    break
            row.append(hit)
        out.append(row)
    return out


def match3(p, modulus: int) -> list[int]:
    """1 at ``i`` iff some ``j, k`` (repeats allowed) give ``p_i+p_j+p_k = 0 mod modulus``."""
    n = len(p)
    out = []
    for i in range(n):
        hit = 0
        for j in range(n):
            for k in range(n):
                if (p[i] + p[j] + p[k]) % modulus == 0:
                    hit = 1
                    break
            if hit:
                break
        out.append(hit)
    return out


def quotient_compose(a, b, col) -> list[list[int]]:
    """``(B o A / col)_ij``: some ``k1 != k2`` with ``A_ik1 = B_k2j = 1`` and equal colors. O(m^4)."""
    m = len(a)
    out = []
    for i in range(m):
        row = []
        for j in range(m):
            hit = 0
            for k1 in range(m):
                for k2 in range(m):
                    if k1 != k2 and a[i][k1] and b[k2][j] and col[k1] == col[k2]:
                        hit = 1
            row.append(hit)
        out.append(row)
    return out


def disj(p, q) -> int:
    """1 iff some position holds a 1 in both words."""
    return int(any(int(u) and int(v) for u, v in zip(p, q)))


def _square(values, m: int):
    return [list(values[r * m:(r + 1) * m]) for r in range(m)]


def _grid_labels(mat, m: int, mask_diagonal: bool) -> tuple[int, ...]:
    out = []
    for i in range(m):
        for j in range(m):
            out.append(MASK if (mask_diagonal and i == j) else mat[i][j])
    return tuple(out)


def oracle_label(task: str, x, meta: dict) -> TaskOracleResult:
    """Label a stored instance (0-based values, ``⊥`` stored as ``n``)."""
    x = [int(t) for t in x]
    if task == "funccomp":
        n = meta.get("n")
        if n is None or len(x) != n + 1 or x[0] != n:
            raise MalformedInstance("funccomp instance must be (⊥=n, f(0), ..., f(n-1))")
        f = x[1:]
        if any(not 0 <= v < n for v in f):
            raise MalformedInstance("function value outside [0, n)")
        return TaskOracleResult((int(f[f[0]] == 0),))
    m = meta.get("m")
    if task == "binrel":
        if m is None or len(x) != m * m:
            raise MalformedInstance("binrel instance must hold an m*m matrix")
        r = _square(x, m)
        return TaskOracleResult(_grid_labels(bool_compose(r, r), m, False))
    if task == "match3":
        modulus = meta.get("M")
        if not modulus or len(x) != meta.get("n", len(x)):
            raise MalformedInstance("match3 instance needs its modulus M")
        return TaskOracleResult(tuple(match3(x, modulus)))
    if task == "quotient":
        if m is None or len(x) != m * m + m:
            raise MalformedInstance("quotient instance must hold R (m*m) followed by col (m)")
        r = _square(x[:m * m], m)
        col = x[m * m:]
        rt = [[r[j][i] for j in range(m)] for i in range(m)]
        return TaskOracleResult(_grid_labels(quotient_compose(r, rt, col), m, True))
    if task == "disj_reduction":
        if m is None or len(x) != 2 * m * m + m:
            raise MalformedInstance("disj_reduction instance must hold A, B (m*m each) and col (m)")
        a = _square(x[:m * m], m)
        b = _square(x[m * m:2 * m * m], m)
        col = x[2 * m * m:]
        return TaskOracleResult(_grid_labels(quotient_compose(a, b, col), m, True))
    raise MalformedInstance(f"unknown task {task!r}")
