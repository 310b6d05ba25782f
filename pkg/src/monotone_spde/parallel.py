"""Deterministic worker pool for embarrassingly parallel path blocks.

Block boundaries are fixed by block size, never by thread count, and results
are combined in block order; per-path randomness comes from per-path streams.
Together this makes every reduction independent of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads == 0:
        env = os.environ.get("MONOTONE_SPDE_THREADS")
        if env:
            return max(1, int(env))
        return min(8, os.cpu_count() or 1)
    return max(1, int(threads))


def path_blocks(n_items: int, block_size: int) -> list[tuple[int, int]]:
    """(start, count) blocks covering range(n_items), boundaries fixed by size."""
    blocks = []
    start = 0
    while start < n_items:
        count = min(block_size, n_items - start)
        blocks.append((start, count))
        start += count
    return blocks


def map_blocks(worker, blocks, threads: int):
    """Ordered map over blocks; numpy releases the GIL so threads scale."""
    if threads <= 1 or len(blocks) <= 1:
        return [worker(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(worker, blocks))
