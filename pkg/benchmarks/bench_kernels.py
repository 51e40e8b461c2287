#!/usr/bin/env python3
"""Benchmark the alignment E-step kernel: numba fast path vs numpy fallback.

The fallback is what you get with TERMFORGE_NUMBA=0 (or without numba
installed); both paths produce identical expected counts.  Run:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from termforge._kernels import (
    USE_NUMBA,
    _ibm1_estep_loops,
    _ibm1_estep_numpy,
    flatten_encoded,
)

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def synth_corpus(rng, n_pairs, vocab, max_len):
    src = [rng.integers(0, vocab, size=rng.integers(2, max_len)) for _ in range(n_pairs)]
    tgt = [rng.integers(0, vocab, size=rng.integers(2, max_len)) for _ in range(n_pairs)]
    return flatten_encoded(src), flatten_encoded(tgt)


def bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        counts = np.zeros_like(args[-1])
        start = time.perf_counter()
        fn(*args[:-1], counts)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    if njit is None:
        print("numba unavailable; benchmarking the numpy path only")
        fast = None
    else:
        fast = njit(cache=True)(_ibm1_estep_loops)

    print(f"package default path: {'numba' if USE_NUMBA else 'numpy'}")
    print(f"{'pairs':>7} {'vocab':>6} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>8}")
    for n_pairs, vocab, max_len in [(100, 200, 8), (500, 500, 9), (2000, 1000, 10)]:
        (sf, so), (tf, to) = synth_corpus(rng, n_pairs, vocab, max_len)
        table = np.full((vocab, vocab), 1.0 / vocab)
        args = (sf, so, tf, to, table, np.zeros_like(table))

        t_np = bench(_ibm1_estep_numpy, args, repeats=3)
        if fast is not None:
            counts_a = np.zeros_like(table)
            counts_b = np.zeros_like(table)
            _ibm1_estep_numpy(sf, so, tf, to, table, counts_a)
            fast(sf, so, tf, to, table, counts_b)
            assert np.array_equal(counts_a, counts_b), "paths disagree"
            t_nb = bench(fast, args, repeats=3)
            print(f"{n_pairs:>7} {vocab:>6} {t_np * 1e3:>12.2f} "
                  f"{t_nb * 1e3:>12.2f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{n_pairs:>7} {vocab:>6} {t_np * 1e3:>12.2f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
