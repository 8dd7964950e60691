"""Worker-count resolution for internally parallel operations.

The MMEV_LAB_THREADS environment variable caps the number of worker
threads. Work is always partitioned the same way regardless of the
worker count, so outputs never depend on this setting.
"""

from __future__ import annotations

import os

_ENV_VAR = "MMEV_LAB_THREADS"


def thread_count() -> int:
    """Number of worker threads to use, >= 1."""
    raw = os.environ.get(_ENV_VAR, "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, min(8, os.cpu_count() or 1))
