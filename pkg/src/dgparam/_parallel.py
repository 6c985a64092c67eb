"""Optional thread-level parallelism for independent simulation runs.

The simulation kernel releases the GIL, so a thread pool gives real
concurrency for finite-difference columns and population fitness sweeps.
DGPARAM_THREADS caps the pool size; 0 or unset means one worker per CPU,
1 disables the pool entirely.
"""

import os
from concurrent.futures import ThreadPoolExecutor

_executor = None
_executor_size = 0


def thread_count():
    raw = os.environ.get("DGPARAM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def _pool(size):
    global _executor, _executor_size
    if _executor is None or _executor_size != size:
        if _executor is not None:
            _executor.shutdown(wait=False)
        _executor = ThreadPoolExecutor(max_workers=size)
        _executor_size = size
    return _executor


def pmap(fn, items):
    """Map fn over items, in order; threads only when the cap allows it."""
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return list(_pool(min(n, len(items))).map(fn, items))
