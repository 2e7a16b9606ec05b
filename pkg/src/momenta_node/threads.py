"""Parallelism cap shared by the experiment runners.

Independent cells of an experiment grid (one model, one seed) may run
concurrently; the MOMENTA_NODE_THREADS environment variable caps how
many, defaulting to the machine's CPU count.
"""

from __future__ import annotations

import os


def thread_cap(n_tasks: int | None = None) -> int:
    raw = os.environ.get("MOMENTA_NODE_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 1:
        cap = os.cpu_count() or 1
    if n_tasks is not None:
        cap = max(1, min(cap, n_tasks))
    return cap
