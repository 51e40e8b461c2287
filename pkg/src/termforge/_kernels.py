"""Numeric hot kernels with a numba fast path and a pure-numpy fallback.

The alignment E-step dominates EM training time, so it is compiled with
``numba.njit`` when available.  Set ``TERMFORGE_NUMBA=0`` to force the
vectorized numpy path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``).  Both paths produce identical counts.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("TERMFORGE_NUMBA", "1") != "0"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def _ibm1_estep_loops(src_flat, src_off, tgt_flat, tgt_off, table, counts):
    """Accumulate expected counts for one EM iteration; returns log-likelihood.

    Sentences arrive flattened (``*_flat``) with offset arrays (``*_off``),
    the layout numba handles without object-mode fallbacks.  ``counts`` is a
    zeroed (S, T) array mutated in place; source index 0 is the null token,
    already present in every source sentence.
    """
    n_pairs = src_off.shape[0] - 1
    loglik = 0.0
    for p in range(n_pairs):
        s0, s1 = src_off[p], src_off[p + 1]
        t0, t1 = tgt_off[p], tgt_off[p + 1]
        slen = s1 - s0
        for j in range(t0, t1):
            tj = tgt_flat[j]
            denom = 0.0
            for i in range(s0, s1):
                denom += table[src_flat[i], tj]
            loglik += np.log(denom / slen)
            for i in range(s0, s1):
                si = src_flat[i]
                counts[si, tj] += table[si, tj] / denom
    return loglik


if USE_NUMBA:
    _ibm1_estep_fast = njit(cache=True)(_ibm1_estep_loops)


def _ibm1_estep_numpy(src_flat, src_off, tgt_flat, tgt_off, table, counts):
    """Vectorized fallback for :func:`_ibm1_estep_loops` (same contract)."""
    n_pairs = src_off.shape[0] - 1
    loglik = 0.0
    for p in range(n_pairs):
        src = src_flat[src_off[p]:src_off[p + 1]]
        tgt = tgt_flat[tgt_off[p]:tgt_off[p + 1]]
        grid = np.ix_(src, tgt)
        sub = table[grid]
        denom = sub.sum(axis=0)
        loglik += float(np.log(denom / src.shape[0]).sum())
        np.add.at(counts, grid, sub / denom)
    return loglik


def ibm1_estep(src_flat, src_off, tgt_flat, tgt_off, table, counts):
    """Run one IBM Model 1 E-step on the active path."""
    if USE_NUMBA:
        return _ibm1_estep_fast(src_flat, src_off, tgt_flat, tgt_off, table, counts)
    return _ibm1_estep_numpy(src_flat, src_off, tgt_flat, tgt_off, table, counts)


def flatten_encoded(sentences):
    """Pack integer-encoded sentences into (flat, offsets) int64 arrays."""
    offsets = np.zeros(len(sentences) + 1, dtype=np.int64)
    for i, sent in enumerate(sentences):
        offsets[i + 1] = offsets[i] + len(sent)
    flat = np.empty(offsets[-1], dtype=np.int64)
    for i, sent in enumerate(sentences):
        flat[offsets[i]:offsets[i + 1]] = sent
    return flat, offsets
