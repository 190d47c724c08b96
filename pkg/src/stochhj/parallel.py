"""Order-preserving map over realization indices with an optional process pool."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def map_realizations(fn, indices, workers: int = 1) -> list:
    """[fn(i) for i in indices], computed by up to ``workers`` processes.

    Results come back in index order, so reductions are independent of the
    worker count.  ``fn`` must be picklable when workers > 1.
    """
    indices = list(indices)
    if workers <= 1 or len(indices) < 2:
        return [fn(i) for i in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices, chunksize=max(1, len(indices) // (4 * workers))))
