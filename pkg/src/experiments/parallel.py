"""
Replicate-level parallelism.

Replicates are cut into fixed chunks of Config.CHUNK_SIZE independent of the
worker count, and joblib returns chunk results in submission order, so the
concatenated output is the same for any number of workers.
"""

import logging
from collections.abc import Callable

import numpy as np
from joblib import Parallel, delayed

from src.core.config import Config

logger = logging.getLogger(__name__)


def chunk_bounds(M: int, chunk_size: int | None = None) -> list[tuple[int, int]]:
    size = chunk_size or Config.CHUNK_SIZE
    return [(start, min(start + size, M)) for start in range(0, M, size)]


def derive_seed(master_seed: int, *key: int) -> int:
    """Child seed for a sub-experiment (e.g. one N), stable across runs."""
    state = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


def run_replicates(
    task: Callable[..., tuple[np.ndarray, ...]],
    M: int,
    *args,
    workers: int | None = None,
    chunk_size: int | None = None,
) -> tuple[np.ndarray, ...]:
    """
    Evaluate task(*args, start, stop) on every replicate chunk and concatenate
    each returned array along axis 0.
    """
    n_jobs = workers or Config.WORKERS
    bounds = chunk_bounds(M, chunk_size)
    logger.debug(
        "Running replicate chunks",
        extra={"task": task.__name__, "replicates": M, "chunks": len(bounds), "workers": n_jobs},
    )
    results = Parallel(n_jobs=n_jobs)(delayed(task)(*args, start, stop) for start, stop in bounds)
    return tuple(np.concatenate(parts, axis=0) for parts in zip(*results, strict=True))
