"""Seeded dataset generators for the four tasks, plus JSONL persistence.

Stored instances are 0-based and unpadded:

* ``funccomp``: ``x = (⊥, f(0), ..., f(n-1))`` with ``⊥`` stored as ``n``;
  one label, ``f(f(0)) == 0``.
* ``binrel``: ``x = flatten(R)`` (row-major, ``m*m`` bits); label ``k = i*m + j``
  is ``(R o R)_ij``.
* ``match3``: ``x = (x_0, ..., x_{n-1})`` in ``[0, M)``; per-token labels.
* ``quotient``: ``x = flatten(R) + col`` (``m*m`` bits then ``m`` colors);
  ``m*m`` labels of ``R^T o R / col`` with ``-100`` on the diagonal.
* ``disj_reduction``: ``x = flatten(A) + flatten(B) + col``; labels as for
  ``quotient``.

All randomness flows through :class:`RngStream` (numpy's PCG64 seeded with
the 64-bit ``seed``), so a seed fixes the whole instance stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .oracles import MASK

TASKS = ("funccomp", "binrel", "match3", "quotient", "disj_reduction")
META_KEYS = ("n", "m", "M", "P", "seed", "index")


class GenerationError(RuntimeError):
    """A generator could not produce a valid dataset within its budget."""


class RngStream:
    """Named, seeded PCG64 stream with a draw counter."""

    algorithm = "numpy.PCG64"

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.draws = 0

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in ``[low, high]`` (both inclusive)."""
        self.draws += 1
        out = self._gen.integers(low, high + 1, size=size)
        return int(out) if size is None else out

    def bernoulli(self, p: float, size):
        self.draws += 1
        return (self._gen.random(size) < p).astype(np.int64)

    def choice(self, values):
        self.draws += 1
        return values[int(self._gen.integers(0, len(values)))]

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._gen.permutation(n)

    def spawn(self, k: int) -> list["RngStream"]:
        seeds = np.random.SeedSequence(self.seed).generate_state(k, dtype=np.uint64)
        return [RngStream(int(s)) for s in seeds]


@dataclass
class TaskInstance:
    task: str
    x: list[int]
    y: list[int]
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        meta = {k: self.meta.get(k) for k in META_KEYS}
        meta.update({k: v for k, v in self.meta.items() if k not in meta})
        record = {"task": self.task, "x": [int(v) for v in self.x],
                  "y": [int(v) for v in self.y], "meta": meta}
        return json.dumps(record, separators=(", ", ": "))

    @classmethod
    def from_json(cls, line: str) -> "TaskInstance":
        rec = json.loads(line)
        if rec.get("task") not in TASKS:
            raise ValueError(f"unknown task {rec.get('task')!r}")
        return cls(rec["task"], list(rec["x"]), list(rec["y"]), dict(rec.get("meta", {})))


def _meta(rng: RngStream, index: int, n: int, m=None, modulus=None, prob=None) -> dict:
    return {"n": n, "m": m, "M": modulus, "P": prob, "seed": rng.seed, "index": index}


def _check_range(nmin: int, nmax: int):
    if not 1 <= nmin <= nmax:
        raise ValueError("need 1 <= Nmin <= Nmax")


def gen_funccomp(rng: RngStream, count: int, nmin: int = 25, nmax: int = 30) -> Iterator[TaskInstance]:
    """Function-composition indicator instances (label: ``f(f(0)) == 0``)."""
    _check_range(nmin, nmax)
    for index in range(count):
        n = rng.integers(nmin, nmax)
        y = None
        while True:
            x = rng.integers(0, n - 1, size=n)
            if y is None:
                y = rng.integers(0, 1)
            if y == 1 and x[x[0]] != 0:
                x[x[0]] = 0
            elif y == 0 and x[x[0]] == 0:
                candidates = [i for i in range(1, n) if x[i] != 0]
                if not candidates:
                    continue    # all-zero tail: no valid f(0), resample the sequence
                x[0] = rng.choice(candidates)
            break
        yield TaskInstance("funccomp", [n] + x.tolist(), [int(y)], _meta(rng, index, n))


def compose_labels(r: np.ndarray) -> np.ndarray:
    """``(R o R)_ij`` via an integer matrix product."""
    r = r.astype(np.int64)
    return ((r @ r) > 0).astype(np.int64)


def gen_binrel(rng: RngStream, count: int, nmin: int = 6, nmax: int = 8,
               prob: float = 0.325) -> Iterator[TaskInstance]:
    if not 0.0 <= prob <= 1.0:
        raise ValueError("P must lie in [0, 1]")
    _check_range(nmin, nmax)
    for index in range(count):
        m = rng.integers(nmin, nmax)
        r = rng.bernoulli(prob, (m, m))
        yield TaskInstance("binrel", r.reshape(-1).tolist(), compose_labels(r).reshape(-1).tolist(),
                           _meta(rng, index, m * m, m=m, prob=prob))


def quotient_labels(a: np.ndarray, b: np.ndarray, col) -> np.ndarray:
    """``(B o A / col)_ij`` by counting same-color witness pairs, minus ``k1 == k2``."""
    m = a.shape[0]
    onehot = np.zeros((m, m), dtype=np.int64)
    onehot[np.arange(m), np.asarray(col)] = 1
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    same_color_pairs = (a @ onehot) @ (b.T @ onehot).T   # sum_c #{k1: A_ik1, col c} #{k2: B_k2j, col c}
    diagonal_pairs = a @ b                                 # k1 == k2 witnesses
    return ((same_color_pairs - diagonal_pairs) > 0).astype(np.int64)


def _mask_diagonal(labels: np.ndarray) -> np.ndarray:
    out = labels.copy()
    np.fill_diagonal(out, MASK)
    return out


def gen_quotient(rng: RngStream, count: int, nmin: int = 6, nmax: int = 8,
                 prob: float = 0.433) -> Iterator[TaskInstance]:
    if not 0.0 <= prob <= 1.0:
        raise ValueError("P must lie in [0, 1]")
    _check_range(nmin, nmax)
    for index in range(count):
        m = rng.integers(nmin, nmax)
        r = rng.bernoulli(prob, (m, m))
        col = rng.integers(0, m - 1, size=m)
        y = _mask_diagonal(quotient_labels(r, r.T, col))
        yield TaskInstance("quotient", r.reshape(-1).tolist() + col.tolist(), y.reshape(-1).tolist(),
                           _meta(rng, index, m * m, m=m, prob=prob))


def match3_labels(x, modulus: int) -> np.ndarray:
    """Per-token Match3 labels via the set of pair sums mod ``modulus``."""
    x = np.asarray(x, dtype=np.int64) % modulus
    pair = np.zeros(modulus, dtype=bool)
    pair[(x[:, None] + x[None, :]).reshape(-1) % modulus] = True
    return pair[(-x) % modulus].astype(np.int64)


def _match3_bin(frac: float) -> int:
    return min(3, int(frac * 4))


def _match3_sequence(rng: RngStream, n: int, modulus: int) -> np.ndarray:
    # Draw from a random palette; small palettes give few matches.
    k = rng.integers(1, n)
    palette = rng.integers(0, modulus - 1, size=k)
    return palette[rng.integers(0, k - 1, size=n)]


def gen_match3(rng: RngStream, size: int, nmin: int = 30, nmax: int = 35, modulus: int = 37,
               seed_iterations: int = 5000, attempts: int = 50) -> list[TaskInstance]:
    """Bin-balanced Match3 dataset of ``size`` instances.

    Seeding phase: ``seed_iterations`` rounds each draw a target percentage
    ``skewness ~ U{1..40}`` and rejection-sample (at most ``attempts`` draws) a
    sequence whose share of positive tokens reaches it; accepted sequences go
    to the bin of their share (``[0,25)``, ``[25,50)``, ``[50,75)``,
    ``[75,100]`` percent) until it holds ``(size/10)/4``. Augmentation phase:
    each bin is filled to ``size/4`` with jointly permuted copies of its
    members.
    """
    if size <= 0 or size % 4:
        raise ValueError("dataset size must be a positive multiple of 4")
    _check_range(nmin, nmax)
    per_bin = size // 4
    cap = max(1, (size // 10) // 4)
    bins: list[list[tuple[np.ndarray, np.ndarray, int]]] = [[], [], [], []]
    for _ in range(seed_iterations):
        if all(len(b) >= cap for b in bins):
            break
        skew = rng.integers(1, 40)
        n = rng.integers(nmin, nmax)
        for _ in range(attempts):
            x = _match3_sequence(rng, n, modulus)
            y = match3_labels(x, modulus)
            if 100.0 * y.mean() >= skew:
                break
        else:
            continue
        b = bins[_match3_bin(y.mean())]
        if len(b) < cap:
            b.append((x, y, skew))
    empty = [i for i, b in enumerate(bins) if not b]
    if empty:
        raise GenerationError(f"Match3 bins {empty} received no seed sequences")

    out: list[TaskInstance] = []
    for b in bins:
        members = list(b)
        while len(members) < per_bin:
            x, y, skew = members[rng.integers(0, len(b) - 1)]
            perm = rng.permutation(len(x))
            members.append((x[perm], y[perm], skew))
        for x, y, skew in members[:per_bin]:
            meta = _meta(rng, len(out), len(x), modulus=modulus)
            meta["skewness"] = skew
            out.append(TaskInstance("match3", x.tolist(), y.tolist(), meta))
    return out


def build_disj_instance(p: str, q: str) -> TaskInstance:
    """Quotient instance whose label at nodes (1, 2) equals ``Disj(p, q)``.

    Nodes are 1-based in the construction: ``A[1, 2+j] = p_j``,
    ``B[2+s+j, 2] = q_j``, ``col(1) = col(2) = 1`` and
    ``col(2+j) = col(2+s+j) = 2+j``. Stored 0-based (node ``t`` -> index
    ``t-1``, color ``c`` -> ``c-1``); the pair (1, 2) is label index 1.
    """
    if len(p) != len(q):
        raise ValueError("p and q must have the same length")
    bits_p = [int(c) for c in p]
    bits_q = [int(c) for c in q]
    if any(b not in (0, 1) for b in bits_p + bits_q):
        raise ValueError("p and q must be bit strings")
    s = len(bits_p)
    m = 2 * s + 2
    a = np.zeros((m, m), dtype=np.int64)
    b = np.zeros((m, m), dtype=np.int64)
    col = np.zeros(m, dtype=np.int64)
    for j in range(1, s + 1):
        a[0, 2 + j - 1] = bits_p[j - 1]
        b[2 + s + j - 1, 1] = bits_q[j - 1]
        col[2 + j - 1] = 2 + j - 1
        col[2 + s + j - 1] = 2 + j - 1
    y = _mask_diagonal(quotient_labels(a, b, col))
    meta = {"n": m * m, "m": m, "M": None, "P": None, "seed": 0, "index": 0}
    return TaskInstance("disj_reduction", a.reshape(-1).tolist() + b.reshape(-1).tolist() + col.tolist(),
                        y.reshape(-1).tolist(), meta)


def disj_label(instance: TaskInstance) -> int:
    """The label at the construction's node pair (1, 2)."""
    return instance.y[1]


def generate(task: str, seed: int, count: int, **kwargs) -> list[TaskInstance]:
    rng = RngStream(seed)
    if task == "funccomp":
        return list(gen_funccomp(rng, count, **kwargs))
    if task == "binrel":
        return list(gen_binrel(rng, count, **kwargs))
    if task == "quotient":
        return list(gen_quotient(rng, count, **kwargs))
    if task == "match3":
        return gen_match3(rng, count, **kwargs)
    raise ValueError(f"no generator for task {task!r}")


def write_jsonl(instances: Iterable[TaskInstance], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")
            n += 1
    return n


def read_jsonl(path) -> list[TaskInstance]:
    with open(Path(path), encoding="utf-8") as fh:
        return [TaskInstance.from_json(line) for line in fh if line.strip()]
