from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

Progress = Callable[[int, int], None]


def chunked(items: Sequence[T], n_chunks: int) -> List[Sequence[T]]:
    """Split `items` into at most `n_chunks` contiguous, order-preserving slices."""
    n = len(items)
    n_chunks = max(1, min(n_chunks, n))
    bounds = [round(i * n / n_chunks) for i in range(n_chunks + 1)]
    return [items[bounds[i]:bounds[i + 1]] for i in range(n_chunks)]


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1,
                 progress: Optional[Progress] = None) -> List[R]:
    """
    Map `fn` over `items` with up to `workers` threads. Results come back in
    input order whatever the completion order, so reductions done on them
    afterwards are deterministic. The numerical kernels spend their time in
    LAPACK, which releases the GIL.
    """
    total = len(items)
    if workers <= 1 or total <= 1:
        out = []
        for i, item in enumerate(items, 1):
            out.append(fn(item))
            if progress:
                progress(i, total)
        return out

    with ThreadPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, item) for item in items]
        out = []
        for i, fut in enumerate(futures, 1):
            out.append(fut.result())
            if progress:
                progress(i, total)
    return out
