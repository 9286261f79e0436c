"""Order-preserving parallel map.

Scenario outputs must be byte-identical for any worker count, so work is
always split per item and joined in submission order; no shared state, no
worker-dependent reductions.
"""

from __future__ import annotations

import multiprocessing
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
U = TypeVar("U")


def pmap(fn: Callable[[T], U], items: Iterable[T], workers: int = 1) -> list[U]:
    """Map fn over items, preserving input order.

    workers <= 1 runs sequentially in-process.  Larger counts use a process
    pool; fn and items must be picklable (module-level functions).
    """
    seq: Sequence[T] = list(items)
    if workers <= 1 or len(seq) <= 1:
        return [fn(x) for x in seq]
    with multiprocessing.Pool(processes=min(workers, len(seq))) as pool:
        return pool.map(fn, seq)
