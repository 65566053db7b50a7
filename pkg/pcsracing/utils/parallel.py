# pcsracing/utils/parallel.py
#
# Fan-out of independent simulation tasks. Workers receive the shared read-only
# context (track, raceline, settings, collections) once through the pool
# initializer; each task then only ships its own small argument.

import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_WORKER_CONTEXT: Dict[str, Any] = {}


def _init_worker(context: Dict[str, Any]) -> None:
    _WORKER_CONTEXT.clear()
    _WORKER_CONTEXT.update(context)


def worker_context() -> Dict[str, Any]:
    """The context installed for the current process."""
    return _WORKER_CONTEXT


async def gather_in_pool(fn: Callable[[T], R], items: Sequence[T], threads: int,
                         context: Dict[str, Any]) -> List[Any]:
    """Runs fn over items and returns results in input order.

    A failed task yields its exception object in place of a result, so callers can
    log and count failures without losing the rest of the batch. threads <= 1 runs
    inline in the calling process.
    """
    if threads <= 1 or len(items) <= 1:
        _init_worker(context)
        results: List[Any] = []
        for item in items:
            try:
                results.append(fn(item))
            except Exception as e:
                results.append(e)
        return results

    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(context,)) as pool:
        futures = [loop.run_in_executor(pool, fn, item) for item in items]
        return await asyncio.gather(*futures, return_exceptions=True)


def run_tasks(fn: Callable[[T], R], items: Sequence[T], threads: int, context: Dict[str, Any]) -> List[Any]:
    """Synchronous entry point for library callers outside an event loop."""
    return asyncio.run(gather_in_pool(fn, items, threads, context))


def split_failures(results: Sequence[Any], what: str) -> List[Any]:
    """Logs every exception in results and returns the successful values in order."""
    ok = []
    for i, result in enumerate(results):
        if isinstance(result, BaseException):
            logger.warning(f"{what} {i} failed: {type(result).__name__}: {result}")
        else:
            ok.append(result)
    return ok
