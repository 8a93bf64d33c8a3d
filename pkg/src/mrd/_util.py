"""Small shared helpers: thread mapping and seed-stream derivation."""

from __future__ import annotations

import os

import numpy as np


def map_maybe_parallel(fn, items):
    """Order-preserving map, threaded when MRD_THREADS > 1."""
    workers = int(os.environ.get("MRD_THREADS", "1") or "1")
    items = list(items)
    if workers > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def derive_rng(seed: int, *spawn_key: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, *spawn_key).

    Philox streams derived this way are independent and reproducible for
    any execution order, which keeps threaded trial loops deterministic.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.Philox(ss))
