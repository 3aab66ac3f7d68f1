"""
Metrics collection for model fitting runs.
Counts fits by outcome, skipped resamples and LP pivots, and times the
stages that run through the job scheduler.

File: hdsurv/src/utils/metrics.py
"""
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator


@dataclass
class TimerStats:
    """Running aggregate of one named timer."""
    count: int = 0
    total: float = 0.0
    longest: float = 0.0

    def add(self, seconds: float) -> None:
        self.count += 1
        self.total += seconds
        self.longest = max(self.longest, seconds)

    def to_dict(self) -> Dict[str, float]:
        return {
            "count": self.count,
            "total_ms": self.total * 1000,
            "avg_ms": self.total * 1000 / self.count if self.count else 0.0,
            "max_ms": self.longest * 1000,
        }


class MetricsCollector:
    """
    Metrics collector for fitting pipelines.
    Thread-safe so parallel jobs can report into one instance.
    """

    def __init__(self) -> None:
        self.lock = threading.RLock()
        self.counters: Dict[str, int] = defaultdict(int)
        self.timers: Dict[str, TimerStats] = defaultdict(TimerStats)
        # estimator -> FitStatus value -> count
        self.fit_results: Dict[str, Dict[str, int]] = defaultdict(lambda: defaultdict(int))
        self.start_time = time.time()

    def increment(self, name: str, value: int = 1) -> None:
        """
        Increment a counter.

        Args:
            name: Counter name
            value: Value to increment by
        """
        with self.lock:
            self.counters[name] += value

    def add_duration(self, name: str, seconds: float) -> None:
        with self.lock:
            self.timers[name].add(seconds)

    @contextmanager
    def timed(self, name: str) -> Iterator[None]:
        """Time the enclosed block under `name`, also when it raises."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.add_duration(name, time.perf_counter() - start)

    def record_fit(self, estimator: str, status: str) -> None:
        """
        Record the outcome of a fit.

        Args:
            estimator: Estimator name (e.g. "cox_mple")
            status: FitStatus value
        """
        with self.lock:
            self.counters["fits"] += 1
            self.fit_results[estimator][status] += 1

    def get_metrics(self) -> Dict[str, Any]:
        """
        Snapshot for the run manifest.

        Counters and fit results are deterministic for a seeded run; timers
        and elapsed time are not.
        """
        with self.lock:
            return {
                "elapsed_seconds": time.time() - self.start_time,
                "counters": dict(self.counters),
                "timers": {name: stats.to_dict() for name, stats in self.timers.items() if stats.count},
                "fit_results": {estimator: dict(results) for estimator, results in self.fit_results.items()},
            }

    def reset(self) -> None:
        """Clear all counters and timers."""
        with self.lock:
            self.counters.clear()
            self.timers.clear()
            self.fit_results.clear()
            self.start_time = time.time()


# Global metrics collector
metrics_collector = MetricsCollector()
