#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against their pure-numpy twins.

Run: python benchmarks/bench_kernels.py [--repeats 5]
The numpy path is also what you get with BIASAUDIT_BACKEND=numpy.
"""

import argparse
import time

import numpy as np

from biasaudit import _kernels


def _time(fn, repeats):
    fn()  # warmup (includes jit compilation on the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_pairwise(rng, repeats):
    rows = rng.normal(size=(2500, 64))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return {
        backend: _time(lambda: _kernels.pairwise_dot_upper(rows), repeats)
        for backend in _with_backends()
    }


def bench_nearest(rng, repeats):
    points = rng.normal(size=(50_000, 32))
    centroids = rng.normal(size=(12, 32))
    return {
        backend: _time(
            lambda: _kernels.nearest_centroid(points, centroids), repeats
        )
        for backend in _with_backends()
    }


def bench_retrieval(rng, repeats):
    queries = rng.normal(size=(2_000, 64))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    candidates = rng.normal(size=(5_000, 64))
    candidates /= np.linalg.norm(candidates, axis=1, keepdims=True)
    flat = np.arange(2_000, dtype=np.int64)
    offsets = np.arange(2_001, dtype=np.int64)
    return {
        backend: _time(
            lambda: _kernels.retrieval_hits(queries, candidates, flat, offsets, 5),
            repeats,
        )
        for backend in _with_backends()
    }


def _with_backends():
    for backend in ("numpy", "numba"):
        try:
            _kernels.set_backend(backend)
        except RuntimeError:
            continue
        yield backend


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    benches = {
        "pairwise_dot_upper (2500x64)": bench_pairwise,
        "nearest_centroid (50k x 32, k=12)": bench_nearest,
        "retrieval_hits (2000q x 5000c x 64)": bench_retrieval,
    }
    print(f"{'kernel':<36} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    print("-" * 73)
    for name, bench in benches.items():
        times = bench(rng, args.repeats)
        np_ms = times.get("numpy", float("nan")) * 1e3
        nb_ms = times.get("numba", float("nan")) * 1e3
        speed = np_ms / nb_ms if nb_ms else float("nan")
        print(f"{name:<36} {np_ms:>12.3f} {nb_ms:>12.3f} {speed:>8.2f}x")


if __name__ == "__main__":
    main()
