"""Thread-pool helper for index-partitioned numba kernels.

Kernels write into preallocated per-unit output slots, so the result does not
depend on how units are split across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads=None) -> int:
    """Worker count: ``threads`` if given, else the CPU count."""
    if threads is None:
        threads = os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def run_chunked(kernel, n_units: int, threads=None, min_chunk: int = 64):
    """Call ``kernel(start, stop)`` over ``range(n_units)`` in contiguous chunks.

    ``kernel`` must release the GIL (``nogil=True`` numba function) to gain
    from more than one thread.
    """
    threads = resolve_threads(threads)
    if n_units <= 0:
        return
    n_chunks = max(1, min(threads * 4, n_units // max(1, min_chunk)))
    if threads == 1 or n_chunks == 1:
        kernel(0, n_units)
        return
    bounds = [n_units * i // n_chunks for i in range(n_chunks + 1)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(kernel, bounds[i], bounds[i + 1])
                   for i in range(n_chunks)]
        for f in futures:
            f.result()
