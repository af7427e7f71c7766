import os

import numpy as np

from sofic_dim.parallel import THREADS_ENV, ordered_map, rng_stream, worker_count


def test_worker_count_reads_environment(monkeypatch) -> None:
    monkeypatch.setenv(THREADS_ENV, "1")
    assert worker_count() == 1

    monkeypatch.setenv(THREADS_ENV, "0")
    assert worker_count() == 1

    monkeypatch.setenv(THREADS_ENV, "many")
    assert worker_count() == (os.cpu_count() or 1)

    monkeypatch.delenv(THREADS_ENV)
    assert worker_count() == (os.cpu_count() or 1)


def test_rng_stream_is_keyed_by_seed_and_tag() -> None:
    first = rng_stream(3, "witness").standard_normal(5)
    again = rng_stream(3, "witness").standard_normal(5)
    other_tag = rng_stream(3, "probe").standard_normal(5)
    other_seed = rng_stream(4, "witness").standard_normal(5)

    assert np.array_equal(first, again)
    assert not np.array_equal(first, other_tag)
    assert not np.array_equal(first, other_seed)


def test_ordered_map_keeps_submission_order() -> None:
    items = list(range(20))

    threaded = ordered_map(lambda x: x * x, items, workers=4)
    serial = ordered_map(lambda x: x * x, items, workers=1)

    assert threaded == serial == [x * x for x in items]
