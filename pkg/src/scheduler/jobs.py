"""
Seeded parallel job runner.

Every stochastic pipeline (CV folds, resamples, bootstrap trees, bootstrap
refits) goes through JobScheduler so that each task owns an independent
random stream derived from one master seed. Results come back in task order,
so outputs do not depend on the worker count.

File: hdsurv/src/scheduler/jobs.py
"""
import logging
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Set, TypeVar

import numpy as np
from joblib import Parallel, delayed
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from src.config import settings
from src.errors import DegenerateResampleError
from src.utils.metrics import metrics_collector

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class JobOutcome:
    """Result of one seeded task."""
    index: int
    value: Any
    attempts: int
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def spawn_generators(seed: Optional[int], n: int) -> List[np.random.Generator]:
    """
    Derive independent generators for n tasks from one master seed.

    Args:
        seed: Master seed
        n: Number of tasks

    Returns:
        List of generators, one per task
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(child) for child in children]


class JobScheduler:
    """
    Runs seeded tasks on a joblib worker pool.
    Degenerate random draws are redrawn with tenacity; other failures are
    logged and reported as failed outcomes.
    """

    def __init__(self, n_jobs: Optional[int] = None, name: str = "jobs") -> None:
        """
        Initialize the scheduler.

        Args:
            n_jobs: Worker count (defaults to settings.THREADS)
            name: Label used in logs and metrics
        """
        self.n_jobs = n_jobs if n_jobs is not None else settings.THREADS
        self.name = name
        self.retry_attempts = settings.JOB_RETRY_ATTEMPTS
        self._lock = threading.Lock()
        self.in_progress: Set[int] = set()

    def _run_job(
        self,
        index: int,
        fn: Callable[[int, np.random.Generator], T],
        rng: np.random.Generator,
        raise_errors: bool,
    ) -> JobOutcome:
        """
        Run a single task with redraw-on-degenerate semantics.

        Args:
            index: Task index
            fn: Callable receiving (index, generator)
            rng: Task generator; advancing it between attempts yields a new draw
            raise_errors: Re-raise non-degenerate failures instead of recording them
        """
        with self._lock:
            self.in_progress.add(index)
        start = time.perf_counter()
        attempts = 0
        try:
            for attempt in Retrying(
                stop=stop_after_attempt(self.retry_attempts),
                retry=retry_if_exception_type(DegenerateResampleError),
                before_sleep=before_sleep_log(logger, logging.WARNING),
                reraise=True,
            ):
                with attempt:
                    attempts = attempt.retry_state.attempt_number
                    value = fn(index, rng)
            return JobOutcome(index=index, value=value, attempts=attempts)

        except DegenerateResampleError as e:
            metrics_collector.increment(f"{self.name}_skipped")
            logger.warning(f"{self.name} task {index} skipped after {attempts} draws: {e}")
            return JobOutcome(index=index, value=None, attempts=attempts, error=str(e))

        except Exception as e:
            if raise_errors:
                raise
            metrics_collector.increment(f"{self.name}_failed")
            logger.error(f"Error in {self.name} task {index}: {str(e)}", exc_info=True)
            return JobOutcome(index=index, value=None, attempts=attempts, error=str(e))

        finally:
            metrics_collector.add_duration(self.name, time.perf_counter() - start)
            with self._lock:
                self.in_progress.discard(index)

    def map_seeded(
        self,
        fn: Callable[[int, np.random.Generator], T],
        n_tasks: int,
        seed: Optional[int],
        raise_errors: bool = False,
    ) -> List[JobOutcome]:
        """
        Run fn(index, rng) for every task index.

        Args:
            fn: Task callable
            n_tasks: Number of tasks
            seed: Master seed
            raise_errors: Propagate unexpected exceptions

        Returns:
            Outcomes in task order
        """
        generators = spawn_generators(seed, n_tasks)
        logger.debug(f"Running {n_tasks} {self.name} tasks on {self.n_jobs} workers")
        return list(
            Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(self._run_job)(i, fn, generators[i], raise_errors)
                for i in range(n_tasks)
            )
        )

    def map(self, fn: Callable[[Any], T], items: Sequence[Any]) -> List[T]:
        """
        Deterministic parallel map without random streams.

        Args:
            fn: Callable applied to each item
            items: Inputs

        Returns:
            Results in input order
        """
        return list(
            Parallel(n_jobs=self.n_jobs, prefer="threads")(delayed(fn)(item) for item in items)
        )
