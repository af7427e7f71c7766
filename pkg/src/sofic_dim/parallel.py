from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import os
from typing import Callable, Iterable, TypeVar
import zlib

import numpy as np

THREADS_ENV = "SOFIC_DIM_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    default = os.cpu_count() or 1
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return max(1, min(value, default))


def rng_stream(seed: int | None, tag: str) -> np.random.Generator:
    """Counter-based stream keyed by (seed, tag); independent across tags."""
    sequence = np.random.SeedSequence(
        0 if seed is None else int(seed), spawn_key=(zlib.crc32(tag.encode("utf-8")),)
    )
    return np.random.Generator(np.random.Philox(sequence))


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
