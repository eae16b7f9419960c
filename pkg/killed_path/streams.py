"""
Counter-based random substreams and ordered block execution.

A substream is fully determined by (seed, purpose, indices...), so a block of
replicas produces the same numbers whichever worker runs it.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional

import numpy as np

from utils.helpers import simulation_setting

logger = logging.getLogger(__name__)

# purpose tags keep the streams of different consumers apart
REPLICAS = 0
FLEMING_VIOT = 1
COUPLING = 2
PROFILE = 3
REFERENCE = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *key)"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def block_size() -> int:
    return int(simulation_setting('BLOCK_SIZE', 4096))


def block_counts(total: int, size: Optional[int] = None) -> list[int]:
    """Split total replicas into consecutive blocks of a fixed size"""
    size = size or block_size()
    full, rest = divmod(int(total), size)
    return [size] * full + ([rest] if rest else [])


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = simulation_setting('DEFAULT_WORKERS', 1)
    return max(1, int(workers))


def map_ordered(fn: Callable, tasks: Iterable, workers: Optional[int] = None) -> list:
    """fn over tasks, results in task order; fn and tasks must be picklable when workers > 1"""
    tasks = list(tasks)
    workers = min(resolve_workers(workers), max(1, len(tasks)))
    if workers == 1:
        return [fn(task) for task in tasks]
    logger.debug('Dispatching %d blocks to %d worker processes', len(tasks), workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, tasks))
