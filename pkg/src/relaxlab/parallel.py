from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(func, items, workers=1):
    """Order-preserving map; runs in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def split_ranges(n, parts):
    """Split range(n) into ``parts`` contiguous (start, stop) blocks."""
    parts = max(1, min(parts, n)) if n else 1
    bounds = [n * i // parts for i in range(parts + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(parts)]
