"""
Counter overflow handling: global timestamp renumbering

When `count` gets close to the counter width, every stored timestamp is
compacted against the set A of pending-frame timestamps. Only the orderings
the read handler actually tests survive:

    ts_t[cell] < wts[cell]
    ts_t[cell] < frame.ts
    frame.ts <= ts_t[cell]

Orderings between timestamps of different cells are not preserved.
"""

import logging
from bisect import bisect_left
from typing import List

import numpy as np

from trmsprof.errors import RenumberInsufficient

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 4
_INFINITY = np.iinfo(np.uint64).max


def active_timestamps(session) -> List[int]:
    """Sorted timestamps of every pending frame across all threads"""
    return sorted(ts for thread in session.threads.values() for ts in thread.stamps)


def _renumber_thread_chunk(values: np.ndarray, writes: np.ndarray,
                           active: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    v = values.astype(np.uint64)
    w = writes.astype(np.uint64)
    # q: rank of the write among active timestamps; j: rank of the access
    q = np.searchsorted(active, w, side='right')
    j = np.searchsorted(active, v, side='right')
    outside = (v < bounds[q]) | (v >= bounds[q + 1])
    inside = np.where(v == w, 3 * q + 1, np.where(w > v, 3 * q, 3 * q + 2))
    renumbered = np.where(outside | (w == 0), 3 * j, inside)
    return np.where(v == 0, 0, renumbered)


def renumber(session) -> None:
    """
    Compact all timestamps of a session, preserving the read handler's tests

    Pending frames get 3p for their 1-based rank p in A. For each cell with
    q = #{a in A : a <= wts}: wts becomes 3q+1; a thread timestamp outside
    [A[q], A[q+1]) becomes 3j with j its own rank, otherwise 3q, 3q+1 or
    3q+2 as it precedes, equals or follows the write. Finally
    count = 3|A| + 3.

    Raises:
        RenumberInsufficient: 3|A|+3 does not fit the counter width
            (state is left untouched)
    """
    stamps = active_timestamps(session)
    new_count = 3 * len(stamps) + 3
    if new_count >= session.limit:
        raise RenumberInsufficient(new_count, len(stamps), session.width)

    active = np.asarray(stamps, dtype=np.uint64)
    bounds = np.concatenate(([0], active, [_INFINITY])).astype(np.uint64)
    wts = session.global_shadow.wts

    # thread tables read the old wts, so they go first
    for thread in session.threads.values():
        for key, leaf in thread.ts_table.iter_chunks():
            writes = wts.chunk(key)
            if writes is None:
                writes = np.zeros_like(leaf)
            leaf[:] = _renumber_thread_chunk(leaf, writes, active, bounds).astype(leaf.dtype)

    for key, leaf in wts.iter_chunks():
        w = leaf.astype(np.uint64)
        q = np.searchsorted(active, w, side='right')
        leaf[:] = np.where(w == 0, 0, 3 * q + 1).astype(leaf.dtype)

    for thread in session.threads.values():
        thread.stamps = [3 * (bisect_left(stamps, ts) + 1) for ts in thread.stamps]
        for frame, ts in zip(thread.stack, thread.stamps):
            frame.ts = ts

    previous = session.count
    session.count = new_count
    session.renumber_count += 1
    log.debug(f"Renumbered {len(stamps)} pending frames: count {previous:,} -> {new_count:,}")


def maybe_renumber(session, margin: int = DEFAULT_MARGIN) -> bool:
    """
    Renumber when count is within `margin` of the largest storable timestamp

    Returns:
        Whether renumbering ran

    Raises:
        RenumberInsufficient: still within the margin after renumbering
    """
    threshold = (session.limit - 1) - margin
    if session.count < threshold:
        return False
    renumber(session)
    if session.count >= threshold:
        raise RenumberInsufficient(session.count, session.count // 3 - 1, session.width)
    return True
