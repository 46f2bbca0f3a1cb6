"""Thread-pool helper with an environment-variable cap.

Results preserve input order regardless of scheduling, so parallel runs are
bitwise-identical to serial ones.  The INVARBIN_THREADS variable caps the
worker count for every consumer at once.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

ENV_THREADS = "INVARBIN_THREADS"


def _env_cap() -> int | None:
    raw = os.environ.get(ENV_THREADS)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValidationError(f"{ENV_THREADS} must be positive, got {value}")
    return value


def worker_count(requested: int | None = None) -> int:
    """Effective worker count: the request, capped by INVARBIN_THREADS.

    Without a request, defaults to min(4, cpu count), again capped.
    """
    cap = _env_cap()
    if requested is None:
        requested = min(4, os.cpu_count() or 1)
    if requested < 1:
        raise ValidationError(f"worker count must be positive, got {requested}")
    if cap is not None:
        requested = min(requested, cap)
    return requested


def map_ordered(fn, items, n_workers: int = 1) -> list:
    """Apply ``fn`` to items, in order; threads only when n_workers > 1."""
    items = list(items)
    if n_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
