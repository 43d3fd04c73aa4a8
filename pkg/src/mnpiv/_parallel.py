"""Thread-pool helper with index-ordered results."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    """Worker count from ``MNPIV_THREADS``, else the machine's CPU count."""
    env = os.environ.get("MNPIV_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"MNPIV_THREADS must be a positive integer, got {env!r}") from exc
        if value < 1:
            raise ValueError(f"MNPIV_THREADS must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def indexed_map(fn, count: int, threads: int | None = None) -> list:
    """``[fn(0), ..., fn(count - 1)]`` evaluated on up to ``threads`` workers."""
    threads = threads or default_threads()
    if threads == 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(fn, range(count)))
