"""Order-preserving process-pool map."""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, workers: int = 1):
    """``list(map(fn, items))``, optionally spread over ``workers`` processes.

    Each item must be computed independently of the others, so the result
    does not depend on the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork")) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
