"""
Worker pool manager for the granular-growth toolkit.
Owns the thread pool used to run simulation blocks concurrently.
"""

import contextvars
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from core.config import get_settings
from core.logging import LoggerMixin

T = TypeVar("T")
R = TypeVar("R")


class WorkerPoolManager(LoggerMixin):
    """Manages the shared thread pool. Results never depend on the pool size."""

    _instance: Optional['WorkerPoolManager'] = None
    _executor: Optional[ThreadPoolExecutor] = None

    def __new__(cls) -> 'WorkerPoolManager':
        """Singleton pattern implementation."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """Initialize the pool manager."""
        if not hasattr(self, '_initialized'):
            self._initialized = True
            self._executor = None
            self._workers = 0

    @property
    def workers(self) -> int:
        """Number of workers the pool runs with."""
        return max(1, get_settings().max_workers)

    @property
    def executor(self) -> ThreadPoolExecutor:
        """Get the executor, rebuilding it if the configured size changed."""
        if self._executor is None or self._workers != self.workers:
            self._initialize_executor()
        return self._executor

    def _initialize_executor(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
        self._workers = self.workers
        self._executor = ThreadPoolExecutor(
            max_workers=self._workers, thread_name_prefix="granular-growth"
        )
        self.logger.debug(f"Worker pool initialized with {self._workers} thread(s)")

    def map_ordered(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Apply ``fn`` to every item and return the results in input order.

        With a single worker the items run inline, which keeps tracebacks
        short and avoids thread overhead for small jobs. Pooled jobs run in a
        copy of the caller's context, so log records keep the run id.
        """
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        context = contextvars.copy_context()
        return list(self.executor.map(lambda item: context.copy().run(fn, item), items))

    def health_check(self) -> dict:
        """Describe the pool state."""
        return {
            "workers": self.workers,
            "machine_parallelism": os.cpu_count() or 1,
            "executor_initialized": self._executor is not None,
        }

    def close(self) -> None:
        """Shut the pool down."""
        if self._executor:
            self._executor.shutdown(wait=True)
            self._executor = None
            self.logger.debug("Worker pool closed")


# Global worker pool instance
worker_pool = WorkerPoolManager()
