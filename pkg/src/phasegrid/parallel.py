"""Worker pool helper with deterministic, order-preserving results.

Work items are pure functions of their inputs; results are collected in
input order and any reduction happens sequentially afterwards, so output
is bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError

__all__ = ["ordered_map"]


def ordered_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
