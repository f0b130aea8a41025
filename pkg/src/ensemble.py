"""Replica ensembles: replica i always draws from derive_stream(seed, i), whatever the
number of workers, and results come back in replica order."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

from src.logger import Logger
from src.paths import RngStream, derive_stream

logger = Logger(__name__)

T = TypeVar("T")


def replica_streams(seed: int, replicas: int, namespace: Sequence[int] = ()) -> list[RngStream]:
    """Streams of the replicas of one ensemble.

    Args:
        seed (int): Root seed.
        replicas (int): Number of replicas.
        namespace (Sequence[int], optional): Stream path prefix separating ensembles
            of the same run. Defaults to ().

    Returns:
        list[RngStream]: One stream per replica.
    """
    base = RngStream(seed, tuple(namespace))
    return [derive_stream(base, i) for i in range(replicas)]


def run_ensemble(
    task: Callable[[RngStream], T],
    seed: int,
    replicas: int,
    workers: int = 1,
    namespace: Sequence[int] = (),
) -> list[T]:
    """Runs `task` once per replica stream, on a process pool when workers > 1.
    The task must be picklable (a module level function or a functools.partial of one).

    Args:
        task (Callable[[RngStream], T]): Replica task.
        seed (int): Root seed.
        replicas (int): Number of replicas.
        workers (int, optional): Number of worker processes. Defaults to 1.
        namespace (Sequence[int], optional): Stream path prefix. Defaults to ().

    Returns:
        list[T]: Results in replica order.
    """
    streams = replica_streams(seed, replicas, namespace)
    name = getattr(task, "__name__", None) or getattr(getattr(task, "func", None), "__name__", "task")
    logger.debug(f"Running {replicas} replicas of {name} on {workers} worker(s)")
    if workers <= 1 or replicas <= 1:
        return [task(stream) for stream in streams]
    chunksize = max(1, replicas // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, streams, chunksize=chunksize))
