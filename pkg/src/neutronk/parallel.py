"""Worker-count control for the compiled kernels.

Results never depend on the worker count: every particle draws from its own
counter-based stream and all reductions happen in a fixed order after the
parallel loops.
"""
from __future__ import annotations

from contextlib import contextmanager

import numba


def max_workers() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def get_workers() -> int:
    return int(numba.get_num_threads())


def set_workers(n: int | None) -> int:
    """Set the thread count (``None`` or 0 means all); returns the value used."""
    n = max_workers() if not n else int(n)
    if n < 1:
        raise ValueError("workers must be >= 1")
    n = min(n, max_workers())
    numba.set_num_threads(n)
    return n


@contextmanager
def workers(n: int | None):
    old = get_workers()
    try:
        yield set_workers(n)
    finally:
        numba.set_num_threads(old)
