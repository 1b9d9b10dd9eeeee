import os
from typing import Callable, Iterable, List, Optional, TypeVar

from multiprocess import Pool

from gse.constants import THREADS_ENV


Job = TypeVar("Job")
Result = TypeVar("Result")


def threads_from_env(default: int = 1) -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return default
    threads = int(value)
    assert threads >= 1, f"{THREADS_ENV} must be a positive integer, got {value}"
    return threads


class Runner:
    """
    Maps independent jobs over a process pool. Results come back in job order, so a
    run is reproducible whatever the number of processes.
    """

    def __init__(self, processes: Optional[int] = None):
        self.processes = threads_from_env() if processes is None else processes
        assert self.processes >= 1, f"processes must be >= 1, got {self.processes}"

    def map(self, fn: Callable[[Job], Result], jobs: Iterable[Job]) -> List[Result]:
        jobs = list(jobs)
        if self.processes <= 1 or len(jobs) <= 1:
            return [fn(job) for job in jobs]
        with Pool(min(self.processes, len(jobs))) as pool:
            return pool.map(fn, jobs)
