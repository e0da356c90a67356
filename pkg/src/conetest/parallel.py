"""Deterministic block-parallel map for Monte Carlo work.

Replicates are cut into fixed-size blocks and block ``i`` always draws from
``derive_stream(seed, i)``. Workers only change scheduling, so merged
results are identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_workers() -> int:
    cap = os.environ.get("CONETEST_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def block_sizes(reps: int, block: int):
    full, rest = divmod(reps, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(work, reps: int, block: int, workers: int | None = None) -> list:
    """``[work(i, size_i) for each block i]``, possibly evaluated in threads."""
    sizes = block_sizes(reps, block)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(sizes) == 1:
        return [work(i, s) for i, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda args: work(*args), enumerate(sizes)))
