"""
Worker Pool and Random Streams.

Two small utilities that every engine shares:

- `parallel_map` runs independent tasks through joblib and returns results in
  submission order, so reductions over the results are deterministic.
- `stream_rng` builds a counter-based random generator from a master seed and
  an integer key. The same key always yields the same stream, regardless of
  which worker evaluates it or in which order.
"""

import logging
from typing import Callable, List, Sequence, TypeVar

import numpy as np
from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Stream kinds used as the second spawn-key word
STREAM_BATH = 0
STREAM_NORMAL = 1
STREAM_INTERNAL = 2
STREAM_TYPICALITY = 3
STREAM_PARTITION = 4


def parallel_map(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply `func` to every item, optionally across a joblib process pool.

    Args:
        func (Callable): A picklable, module-level function.
        items (Sequence): Task arguments.
        workers (int): Number of processes. 1 runs inline.

    Returns:
        List: Results in the order of `items`.
    """
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    logger.debug(f"Dispatching {len(items)} tasks to {workers} workers.")
    return list(Parallel(n_jobs=workers)(delayed(func)(item) for item in items))


def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    """
    Create the random generator for one (master seed, key) stream.

    Args:
        master_seed (int): The run's master seed.
        *key (int): Non-negative integers identifying the stream.

    Returns:
        np.random.Generator: A PCG64 generator seeded from the SeedSequence.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def derive_seed(master_seed: int, *key: int) -> int:
    """
    Derive a 64-bit child seed (e.g. the bath seed of one disorder realization).
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
