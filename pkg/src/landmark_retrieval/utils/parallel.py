"""Thread-pool helper with a deterministic result order."""

from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], num_threads: int = 1) -> list[R]:
    """
    Apply ``fn`` to every item, optionally on a thread pool.

    Results always come back in input order, so any reduction done by the
    caller is independent of the thread count.
    """
    items = list(items)
    if num_threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=num_threads) as executor:
        return list(executor.map(fn, items))
