"""
Fixed-chunk helpers so results never depend on the worker count
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(workers: Optional[int]) -> int:
    """None means machine parallelism"""
    if workers is None:
        return os.cpu_count() or 1
    return max(1, int(workers))


def chunk_bounds(n: int, chunk_size: int) -> List[Tuple[int, int]]:
    """
    Split range(n) into consecutive [start, stop) chunks

    Args:
        n: Number of rows
        chunk_size: Rows per chunk (last chunk may be shorter)

    Returns:
        List of (start, stop) pairs in ascending order
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


def map_ordered(
    fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None
) -> List[R]:
    """
    Apply fn to every item, results in input order regardless of completion order

    Numpy releases the GIL inside its kernels, so threads give real speedups for
    the chunk-sized array work this is used for.
    """
    n_workers = min(resolve_workers(workers), max(1, len(items)))
    if n_workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as executor:
        return list(executor.map(fn, items))


def pairwise_reduce(parts: Iterable[T], combine: Callable[[T, T], T]) -> T:
    """
    Reduce with a fixed balanced tree: ((p0+p1)+(p2+p3))+...

    The tree shape depends only on the number of parts, so floating point results
    are reproducible.
    """
    level = list(parts)
    if not level:
        raise ValueError("nothing to reduce")
    while len(level) > 1:
        merged = [combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return level[0]
