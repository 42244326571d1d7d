"""
Worker pool for independent units of work (realization batches, sweep cells).

Results always come back in submission order, so reductions over them are
independent of worker count and completion order.
"""

from concurrent.futures import Future, ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence

from config import MAX_WORKERS
from utils import logger, log_exception


def submit_cells(executor: ThreadPoolExecutor, fn: Callable[[Any], Any], cells: Iterable[Any]) -> List[Future]:
    """
    Submits fn(cell) for every cell.

    Returns:
        List of Futures, in the order of the cells
    """
    futures = [executor.submit(fn, cell) for cell in cells]
    logger.debug(f"Submitted {len(futures)} tasks to the worker pool")
    return futures


def wait_for_all(futures: Sequence[Future], timeout: Optional[float] = None) -> List[Any]:
    """
    Waits for every future and returns the results in submission order.

    The first failure is logged and re-raised once all tasks have finished,
    so no worker is left running on a failed run.
    """
    results = []
    first_error = None
    for future in futures:
        try:
            results.append(future.result(timeout=timeout))
        except Exception as e:
            if first_error is None:
                log_exception(e, "Worker task failed")
                first_error = e
            results.append(None)
    if first_error is not None:
        raise first_error
    return results


def run_ordered(fn: Callable[[Any], Any], cells: Sequence[Any], max_workers: Optional[int] = None) -> List[Any]:
    """Maps fn over cells on a bounded pool; runs inline for a single worker or cell."""
    workers = max_workers if max_workers is not None else MAX_WORKERS
    if workers <= 1 or len(cells) <= 1:
        return [fn(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=min(workers, len(cells))) as executor:
        return wait_for_all(submit_cells(executor, fn, cells))
