#!/usr/bin/env python3
"""Benchmark the similarity kernel backends: compiled extension vs pure Python.

Usage:
    python benchmarks/bench_kernel.py [--rows 20000] [--dim 256] [--repeats 5]

Scores a query against a flat row-major buffer (the exact inner loop of
VectorIndex.query_vector) under both backends and reports wall times and
the speedup.  Also cross-checks that the two backends agree bit for bit.
"""

from __future__ import annotations

import argparse
import random
import statistics
import time
from array import array

from citegate import _pykernel
from citegate import kernel

try:
    from citegate import _simkernel
except ImportError:
    _simkernel = None


def build_data(rows: int, dim: int, seed: int = 1):
    rng = random.Random(seed)
    data = array("d", [rng.uniform(-1.0, 1.0) for _ in range(rows * dim)])
    query = array("d", [rng.uniform(-1.0, 1.0) for _ in range(dim)])
    return data, query


def time_backend(impl, data, query, rows, repeats):
    out = array("d", bytes(8 * rows))
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        impl.dot_scores(data, query, out)
        times.append(time.perf_counter() - start)
    return min(times), statistics.median(times), out


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--rows", type=int, default=20000)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    data, query = build_data(args.rows, args.dim)
    print(f"kernel benchmark: {args.rows} rows x {args.dim} dims, best of {args.repeats}")
    print(f"selected backend at import: {kernel.BACKEND}")

    pure_best, pure_med, pure_out = time_backend(
        _pykernel, data, query, args.rows, args.repeats
    )
    print(f"pure python : best {pure_best * 1e3:9.2f} ms   median {pure_med * 1e3:9.2f} ms")

    if _simkernel is None:
        print("compiled    : extension not built (run: python setup.py build_ext --inplace)")
        return 0

    comp_best, comp_med, comp_out = time_backend(
        _simkernel, data, query, args.rows, args.repeats
    )
    print(f"compiled    : best {comp_best * 1e3:9.2f} ms   median {comp_med * 1e3:9.2f} ms")
    print(f"speedup     : {pure_best / comp_best:8.1f}x (best / best)")
    identical = comp_out.tobytes() == pure_out.tobytes()
    print(f"bit-identical outputs: {identical}")
    return 0 if identical else 1


if __name__ == "__main__":
    raise SystemExit(main())
