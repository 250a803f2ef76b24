"""Deterministic chunked Monte Carlo: results do not depend on the worker count."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 2048


def chunk_plan(n_items: int, chunk: int = CHUNK):
    """``[(start, count), ...]`` covering ``range(n_items)`` in fixed-size blocks."""
    return [(a, min(chunk, n_items - a)) for a in range(0, n_items, chunk)]


def run_chunks(fn, seed, n_items: int, chunk: int = CHUNK, workers: int = 1, stream: int = 0):
    """Apply ``fn(rng, start, count)`` to every chunk and return results in chunk order.

    Chunk ``i`` always receives the ``i``-th child of
    ``SeedSequence([seed, stream])``, so the set of random numbers, and the
    order in which results are returned, is fixed by ``(seed, stream,
    n_items, chunk)`` alone.
    """
    plan = chunk_plan(n_items, chunk)
    seqs = np.random.SeedSequence([int(seed), int(stream)]).spawn(len(plan))
    jobs = [(np.random.default_rng(ss), a, c) for ss, (a, c) in zip(seqs, plan)]
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda j: fn(*j), jobs))


def ordered_sum(values) -> float:
    """Exactly rounded sum, independent of how the values were produced."""
    return math.fsum(float(v) for v in values)
