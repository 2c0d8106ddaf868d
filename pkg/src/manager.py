import logging
from concurrent.futures import ThreadPoolExecutor

import psutil

logger = logging.getLogger(__name__)


def default_jobs():
    """Physical core count, falling back to logical cores, then 1"""
    count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True)
    return max(1, int(count or 1))


class WorkerPool:
    """
    Caps the number of concurrent worker threads and keeps results in input order.

    jobs=1 runs everything inline in the calling thread, so a pool can be passed
    down unconditionally without changing results.
    """

    def __init__(self, jobs=1, name="pool"):
        self.jobs = max(1, int(jobs or 1))
        self.name = name
        self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.shutdown()

    @property
    def is_parallel(self):
        return self.jobs > 1

    def _ensure_executor(self):
        if self._executor is None:
            self._executor = ThreadPoolExecutor(
                max_workers=self.jobs, thread_name_prefix=self.name
            )
            logger.debug(f"[POOL] {self.name}: started {self.jobs} workers")
        return self._executor

    def map(self, func, items):
        """Apply `func` to every item; result list matches input order"""
        items = list(items)
        if not self.is_parallel or len(items) <= 1:
            return [func(item) for item in items]
        return list(self._ensure_executor().map(func, items))

    def shutdown(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
            logger.debug(f"[POOL] {self.name}: workers stopped")


INLINE = WorkerPool(1, name="inline")
