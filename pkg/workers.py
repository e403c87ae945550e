"""
workers.py — Seed derivation and the worker pool.

Every random stream in the lab is derived from a master seed plus an integer
key (replicate index, grid index, repeat index, ...). Streams never depend on
which worker runs them, so serial and parallel runs agree bit-for-bit.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

JOBS_ENV = "LLS_LAB_JOBS"
MAX_SEED = 2**64 - 1

T = TypeVar("T")
R = TypeVar("R")

Seed = int | np.random.SeedSequence


def derive_seed(seed: Seed, *key: int) -> np.random.SeedSequence:
    """Child seed for (seed, *key). Same inputs, same stream, in any process."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(key))


def make_rng(seed: Seed, *key: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *key))


def resolve_jobs(jobs: int | None = None) -> int:
    """--jobs wins; otherwise LLS_LAB_JOBS; otherwise 1."""
    if jobs is None:
        raw = os.environ.get(JOBS_ENV, "1")
        try:
            jobs = int(raw)
        except ValueError:
            logger.warning(f"Ignoring non-integer {JOBS_ENV}={raw!r}")
            jobs = 1
    return max(1, jobs)


def parallel_map(fn: Callable[[T], R], tasks: Iterable[T], jobs: int = 1) -> list[R]:
    """
    Map fn over tasks, returning results in task order.

    fn must be a module-level function so it can be pickled. With jobs <= 1
    everything runs in-process.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]

    chunksize = max(1, len(tasks) // (jobs * 4))
    logger.debug(f"Dispatching {len(tasks)} tasks to {jobs} workers")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=chunksize))
