import logging
import multiprocessing
from typing import Callable, Iterable, TypeVar

from app.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], jobs: int | None = None) -> list[R]:
    """
    Ordered map over independent work items.

    With jobs <= 1 the map runs in-process. Otherwise items go to a process
    pool; func must be a module-level function (or a functools.partial of
    one) and every item must pickle. Results come back in input order, so
    reports do not depend on the worker count.
    """
    jobs = settings.jobs if jobs is None else jobs
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    workers = min(jobs, len(items))
    logger.debug("mapping %d items over %d workers", len(items), workers)
    pool = multiprocessing.Pool(processes=workers)
    try:
        return pool.map(func, items)
    finally:
        pool.close()
        pool.join()
