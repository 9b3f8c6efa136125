"""Parallel evaluation of independent grid cells."""

import logging
from concurrent.futures import ProcessPoolExecutor

from birhythm import settings

logger = logging.getLogger(__name__)


class Progress:
    """Log one line per completed percent."""

    def __init__(self, total, label="cells"):
        self.total = total
        self.label = label
        self.done = 0
        self.reported = -1

    def advance(self, count=1):
        self.done += count
        percent = 100 * self.done // self.total if self.total else 100
        if percent > self.reported:
            self.reported = percent
            logger.info("%d%% (%d/%d %s)", percent, self.done, self.total, self.label)


def run_cells(func, tasks, workers=None, chunksize=1, label="cells"):
    """Evaluate ``func`` on every task and return the results in task order.

    ``func`` must be picklable (a module-level function or a partial of one)
    when more than one worker is used.
    """
    tasks = list(tasks)
    workers = settings.WORKERS if workers is None else workers
    progress = Progress(len(tasks), label)
    if workers <= 1 or len(tasks) <= 1:
        results = []
        for task in tasks:
            results.append(func(task))
            progress.advance()
        return results
    results = []
    with ProcessPoolExecutor(max_workers=workers) as executor:
        for result in executor.map(func, tasks, chunksize=max(1, chunksize)):
            results.append(result)
            progress.advance()
    return results
