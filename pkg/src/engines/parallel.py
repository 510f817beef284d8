"""
Parallel Map - order-preserving process pool

Results come back in input order whatever the worker count, and every task
seeds itself from its own SeedSpec, so output is identical for 1 or N workers.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar


logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: int = 1,
    chunksize: int = 1,
) -> List[R]:
    """map(fn, items) on `workers` processes; fn and items must be picklable"""
    items = list(items)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Mapping {len(items)} tasks on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, chunksize)))


def auto_chunksize(count: int, workers: int) -> int:
    """A few chunks per worker keeps the pool busy without per-task overhead"""
    if workers <= 1:
        return 1
    return max(1, count // (workers * 4))
