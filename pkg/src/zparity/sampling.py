"""Deterministic, thread-count-independent random sampling.

Every trajectory (or fixed-size batch of trajectories) gets its own
counter-based Philox stream: stream ``i`` of master seed ``m`` is
``Philox(key=m, counter=[0, 0, i, 0])``.  Results are therefore identical
whether batches run serially or on a thread pool.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BATCH_SIZE = 65536


def stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for trajectory/batch ``index`` under ``master_seed``."""
    bitgen = np.random.Philox(key=np.uint64(master_seed), counter=[0, 0, np.uint64(index), 0])
    return np.random.Generator(bitgen)


def uniforms(master_seed: int, n: int, threads: int = 1, offset: int = 0) -> np.ndarray:
    """n uniform variates assembled from fixed-size counter-based batches.

    ``offset`` shifts the stream index of the first batch, so callers can
    reserve disjoint stream families for independent sub-experiments.
    """
    n_batches = (n + BATCH_SIZE - 1) // BATCH_SIZE
    out = np.empty(n, dtype=float)

    def fill(b: int) -> None:
        lo = b * BATCH_SIZE
        hi = min(lo + BATCH_SIZE, n)
        out[lo:hi] = stream(master_seed, offset + b).random(hi - lo)

    if threads > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(n_batches)))
    else:
        for b in range(n_batches):
            fill(b)
    return out


def sample_counts(
    probabilities: np.ndarray, n: int, master_seed: int, threads: int = 1, offset: int = 0
) -> np.ndarray:
    """Draw n category indices from ``probabilities``; return per-category counts."""
    probs = np.asarray(probabilities, dtype=float)
    edges = np.cumsum(probs)
    edges[-1] = max(edges[-1], 1.0)
    draws = np.searchsorted(edges, uniforms(master_seed, n, threads, offset), side="right")
    return np.bincount(draws, minlength=len(probs))
