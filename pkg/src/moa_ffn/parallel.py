"""
Fan-out of independent jobs (training seeds, ablation cells, fit restarts,
witness rows) onto worker processes.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar, Union
import asyncio
import logging

logger = logging.getLogger(__name__)

J = TypeVar("J")
R = TypeVar("R")

Outcome = Union[R, BaseException]


async def gather_in_processes(
    fn: Callable[[J], R], jobs: Sequence[J], workers: int
) -> List[Outcome]:
    """Run ``fn`` over ``jobs`` in a process pool; exceptions are returned, not raised."""
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, fn, job) for job in jobs]
        return list(await asyncio.gather(*futures, return_exceptions=True))


def run_jobs(fn: Callable[[J], R], jobs: Sequence[J], workers: int = 1) -> List[Outcome]:
    """
    Evaluate ``fn`` on every job and return outcomes in submission order.

    With ``workers <= 1`` jobs run in this process one after another, which
    keeps results identical to the parallel path since every job is
    self-contained.

    Args:
        fn: Picklable top-level function
        jobs: Picklable job descriptions
        workers: Number of worker processes

    Returns:
        One entry per job: its result or the exception it raised
    """
    if not jobs:
        return []
    if workers <= 1 or len(jobs) == 1:
        outcomes: List[Outcome] = []
        for job in jobs:
            try:
                outcomes.append(fn(job))
            except Exception as e:
                logger.error(f"Job failed: {e}")
                outcomes.append(e)
        return outcomes
    workers = min(workers, len(jobs))
    logger.info(f"Dispatching {len(jobs)} jobs to {workers} worker processes")
    outcomes = asyncio.run(gather_in_processes(fn, jobs, workers))
    for outcome in outcomes:
        if isinstance(outcome, BaseException):
            logger.error(f"Job failed: {outcome}")
    return outcomes
