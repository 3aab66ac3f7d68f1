"""
Scheduler package for seeded parallel jobs.

File: hdsurv/src/scheduler/__init__.py
"""

from src.scheduler.jobs import JobOutcome, JobScheduler, spawn_generators

__all__ = ["JobOutcome", "JobScheduler", "spawn_generators"]
