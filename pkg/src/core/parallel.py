"""
Parallel - Deterministic batch map over chunks
"""

import logging
from typing import Any, Callable, List, Sequence

from joblib import Parallel, delayed

from core import settings

logger = logging.getLogger(__name__)


def chunk_ranges(count: int, chunk_size: int) -> List[range]:
    """Split range(count) into consecutive chunks."""
    chunk_size = max(1, int(chunk_size))
    return [range(start, min(start + chunk_size, count)) for start in range(0, count, chunk_size)]


def ordered_map(func: Callable[[Any], Any], items: Sequence[Any], threads: int = None) -> List[Any]:
    """Apply func to every item, results in input order."""
    workers = settings.threads if threads is None else max(1, int(threads))
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Mapping {len(items)} chunks on {workers} threads")
    return Parallel(n_jobs=workers, prefer="threads")(delayed(func)(item) for item in items)
