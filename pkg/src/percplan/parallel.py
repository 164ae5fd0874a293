"""Ordered data-parallel map used by every parallel phase.

Jobs are independent and results come back in submission order, so the
worker count never changes an answer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def split(n: int, parts: int) -> list[slice]:
    """Contiguous slices covering ``range(n)``; never returns empty slices."""
    parts = max(1, min(parts, n))
    if n == 0:
        return []
    bounds = [round(k * n / parts) for k in range(parts + 1)]
    return [slice(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def pmap(fn, jobs, workers: int = 1):
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))
