"""Order-preserving parallel map for independent Monte-Carlo tasks.

Worker count comes from ``HBF_THREADS`` (default: CPU count). BLAS is
pinned to one thread inside every task so results do not depend on how
many workers run.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from threadpoolctl import threadpool_limits

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("HBF_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"HBF_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _call_single_threaded(payload):
    fn, item = payload
    with threadpool_limits(limits=1):
        return fn(item)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """``[fn(x) for x in items]``, possibly across processes; `fn` must be picklable."""
    items = list(items)
    n = min(worker_count(workers), len(items)) if items else 1
    payloads = [(fn, item) for item in items]
    if n <= 1:
        return [_call_single_threaded(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_call_single_threaded, payloads))
