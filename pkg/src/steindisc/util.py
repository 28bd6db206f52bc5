"""Shared numeric plumbing: the RNG contract and deterministic pair sums."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

__all__ = ["generator", "blocked_pair_sum"]


def generator(seed: int) -> np.random.Generator:
    """The library-wide RNG contract: a Philox counter-based generator.

    Counter-based streams give identical draws for a given seed on every
    platform and are cheap to split, so all stochastic operations route
    through this constructor.
    """
    return np.random.Generator(np.random.Philox(np.uint64(seed)))


def _tree_sum(parts: list[float]) -> float:
    """Sum a list pairwise in a fixed order, independent of how it was built."""
    if not parts:
        return 0.0
    work = list(parts)
    while len(work) > 1:
        work = [work[i] + work[i + 1] if i + 1 < len(work) else work[i] for i in range(0, len(work), 2)]
    return work[0]


def blocked_pair_sum(
    block_fn: Callable[[int, int, int, int], float],
    n: int,
    m: int,
    block: int = 256,
    n_threads: int | None = None,
) -> float:
    """Deterministic double sum over an n x m grid evaluated in blocks.

    ``block_fn(i0, i1, j0, j1)`` returns the partial sum over the block
    ``[i0:i1) x [j0:j1)``.  Partial sums are combined by a fixed-order tree
    reduction, so the result is bit-identical for any thread count.
    """
    spans_i = [(i, min(i + block, n)) for i in range(0, n, block)]
    spans_j = [(j, min(j + block, m)) for j in range(0, m, block)]
    tasks = [(i0, i1, j0, j1) for i0, i1 in spans_i for j0, j1 in spans_j]
    if n_threads is not None and n_threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(lambda t: float(block_fn(*t)), tasks))
    else:
        parts = [float(block_fn(*t)) for t in tasks]
    return _tree_sum(parts)
