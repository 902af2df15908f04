"""Order-preserving map over a process pool."""

from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, workers: int = 1) -> list:
    """``list(map(fn, items))``, optionally spread over ``workers`` processes.

    ``fn`` must be picklable (a module-level function or a ``functools.partial``
    of one). Output order always matches input order.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))
