"""Wall-time benchmarks for the attention kernels and the matrix products.

Each ``(n, d)`` cell runs one warm-up and then ``reps`` timed forwards with
``time.perf_counter``, and reports the median. Peak allocation comes from a
separate ``tracemalloc`` run, so tracing never slows the timed runs. BLAS is
pinned to one thread unless ``threads`` says otherwise.
"""

from __future__ import annotations

import contextlib
import csv
import os
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import AttentionParams, Kind, standard_attention, strassen_attention_fast, \
    strassen_attention_naive, third_order_attention, triangular_attention
from .tensor_core import matmul, strassen_matmul

CSV_COLUMNS = ("mechanism", "path", "n", "d", "reps", "median_seconds", "peak_bytes", "status")
OUT_ENV = "STRASSEN_LAB_OUT"
DEFAULT_MEMORY_LIMIT = 1 << 30
PATHS = ("naive", "fast")


@dataclass
class BenchRecord:
    mechanism: str
    path: str
    n: int
    d: int
    reps: int
    median_seconds: float
    peak_bytes: int
    status: str = "ok"

    def row(self) -> list:
        return [self.mechanism, self.path, self.n, self.d, self.reps,
                f"{self.median_seconds:.9g}", self.peak_bytes, self.status]


def output_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def _estimate_bytes(mechanism: str, path: str, n: int, d: int) -> int:
    """Rough float64 footprint of the largest intermediate."""
    if mechanism == "matmul":
        return 8 * 4 * n * n
    if mechanism == "standard":
        return 8 * (n * n + 4 * n * d)
    if mechanism == "triangular":         # n is the grid side
        return 8 * (n ** 3 + 6 * n * n * d)
    if mechanism == "third_order":
        return 8 * (n ** 3 + 6 * n * d)
    if path == "fast":
        return 8 * (6 * n * n + 6 * n * d)
    return 8 * (min(n ** 3, 1 << 23) + 6 * n * d + 3 * n * n)


def _workload(mechanism: str, path: str, n: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    if mechanism == "matmul":
        a, b = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        if path == "naive":
            return lambda: matmul(a, b)
        if path == "strassen":
            return lambda: strassen_matmul(a, b)
        if path == "blas":
            return lambda: a @ b
        raise ValueError(f"unknown matmul path {path!r}")
    kind = Kind(mechanism)
    if kind is not Kind.STRASSEN and path != "naive":
        raise ValueError(f"{mechanism} has only the naive path")
    p = AttentionParams.random(kind, d, rng, std=1.0 / np.sqrt(d))
    if kind is Kind.TRIANGULAR:
        x = rng.standard_normal((n, n, d))
        return lambda: triangular_attention(x, p)
    x = rng.standard_normal((n, d))
    if kind is Kind.STANDARD:
        return lambda: standard_attention(x, p)
    if kind is Kind.THIRD_ORDER:
        return lambda: third_order_attention(x, p)
    if path == "fast":
        return lambda: strassen_attention_fast(x, p)
    if path == "naive":
        return lambda: strassen_attention_naive(x, p)
    raise ValueError(f"unknown strassen path {path!r}")


def _limits(threads: int | None):
    return threadpool_limits(limits=threads) if threads else contextlib.nullcontext()


def time_call(fn, reps: int) -> float:
    fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def peak_allocation(fn) -> int:
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def bench_forward(mechanism: str, path: str, n_list, d_list, reps: int = 5, seed: int = 0,
                  threads: int | None = 1, memory_limit: int = DEFAULT_MEMORY_LIMIT,
                  track_memory: bool = True) -> list[BenchRecord]:
    """Time one forward per ``(n, d)``; a cell that fails is recorded, not raised."""
    if reps < 5:
        raise ValueError("need at least 5 repetitions")
    out = []
    for n in n_list:
        for d in d_list:
            rec = BenchRecord(mechanism, path, int(n), int(d), reps, float("nan"), 0)
            if _estimate_bytes(mechanism, path, n, d) > memory_limit:
                rec.status = "skipped_memory"
                out.append(rec)
                continue
            try:
                fn = _workload(mechanism, path, n, d, seed + 1000003 * n + d)
                with _limits(threads):
                    rec.median_seconds = time_call(fn, reps)
                    if track_memory:
                        rec.peak_bytes = peak_allocation(fn)
            except MemoryError:
                rec.status = "failed_memory"
            except Exception as exc:       # keep the sweep going; the CSV records the cause
                rec.status = f"failed_{type(exc).__name__}"
            out.append(rec)
    return out


def scaling_ratio(records: list[BenchRecord], n_small: int, n_large: int) -> float:
    by_n = {r.n: r.median_seconds for r in records if r.status == "ok"}
    return by_n[n_large] / by_n[n_small]


def write_csv(records, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())
    return path


def read_csv(path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("unexpected benchmark CSV header")
    return [BenchRecord(r[0], r[1], int(r[2]), int(r[3]), int(r[4]), float(r[5]), int(r[6]), r[7])
            for r in rows[1:]]
