"""
Event dispatch shared by the shadow-stack profiler and the naive oracle

A replayer walks a merged trace and turns each event into handler calls:
thread switches are detected from tid changes, sized accesses are expanded
into cells, per-thread cost counters are charged, and accesses made while a
thread has no pending routine are attributed to a synthetic root frame.
"""

import logging
from typing import Dict, Iterable, List, Optional

from trmsprof.errors import CheckFailed, ReplayError, ReturnOnEmptyStack, TrmsError
from trmsprof.store import ROOT_ROUTINE, ProfileStore, ProfileTuple
from trmsprof.trace_model import EventKind, TraceEvent, expand_access

log = logging.getLogger(__name__)


class TraceReplayer:
    """
    Base dispatcher; subclasses implement the on_* handlers

    Cost model: every event except `cost N` charges 1 to its thread. A call
    is charged before its frame records the entry cost, a return after its
    tuple is collected, so an activation's cost counts exactly the events
    its thread executed strictly inside it.
    """

    def __init__(self, granularity: int = 1):
        self.granularity = granularity
        self.cost_counters: Dict[int, int] = {}
        self.last_tid: Optional[int] = None
        self.tuples: List[ProfileTuple] = []
        self.events_seen = 0
        self.switches = 0
        self.finished = False

    # ------------------------------------------------------------------------
    # Handlers (implemented by subclasses)
    # ------------------------------------------------------------------------

    def add_thread(self, tid: int) -> None:
        raise NotImplementedError

    def depth(self, tid: int) -> int:
        raise NotImplementedError

    def top_routine(self, tid: int) -> Optional[int]:
        raise NotImplementedError

    def on_call(self, tid: int, routine: int) -> None:
        raise NotImplementedError

    def on_return(self, tid: int, truncated: bool = False) -> ProfileTuple:
        raise NotImplementedError

    def on_switch(self) -> None:
        raise NotImplementedError

    def on_read(self, tid: int, cell: int) -> None:
        raise NotImplementedError

    def on_write(self, tid: int, cell: int) -> None:
        raise NotImplementedError

    def on_kernel_read(self, tid: int, cell: int) -> None:
        self.on_read(tid, cell)

    def on_kernel_write(self, tid: int, cell: int) -> None:
        raise NotImplementedError

    def after_event(self, index: int, event: TraceEvent) -> None:
        """Hook run after each event has been fully handled"""

    # ------------------------------------------------------------------------
    # Dispatch
    # ------------------------------------------------------------------------

    def process(self, event: TraceEvent) -> None:
        tid = event.tid
        if tid not in self.cost_counters:
            self.cost_counters[tid] = 0
            self.add_thread(tid)

        if self.last_tid is not None and tid != self.last_tid:
            self.switches += 1
            self.on_switch()
        self.last_tid = tid

        kind = event.kind
        if kind is EventKind.CALL:
            self.cost_counters[tid] += 1
            self.on_call(tid, event.routine)
        elif kind is EventKind.RETURN:
            if self.top_routine(tid) in (None, ROOT_ROUTINE):
                raise ReturnOnEmptyStack(tid)
            self.tuples.append(self.on_return(tid))
            self.cost_counters[tid] += 1
        elif kind is EventKind.COST:
            self.cost_counters[tid] += event.amount
        else:
            if kind is EventKind.KERNEL_WRITE:
                handler = self.on_kernel_write
            else:
                if self.depth(tid) == 0:
                    self.on_call(tid, ROOT_ROUTINE)
                if kind is EventKind.READ:
                    handler = self.on_read
                elif kind is EventKind.WRITE:
                    handler = self.on_write
                else:
                    handler = self.on_kernel_read
            self.cost_counters[tid] += 1
            for cell in expand_access(event, self.granularity):
                handler(tid, cell)
        self.events_seen += 1

    def replay(self, events: Iterable[TraceEvent]) -> "TraceReplayer":
        """
        Dispatch every event in order

        Raises:
            ReplayError: a handler failed (wraps the cause, carries the index)
            CheckFailed: a lock-step self-check did not pass
        """
        for index, event in enumerate(events):
            try:
                self.process(event)
                self.after_event(index, event)
            except CheckFailed:
                raise
            except TrmsError as exc:
                raise ReplayError(index, event, exc) from exc
        return self

    def finish(self) -> ProfileStore:
        """Force-return every pending frame (flagged truncated) and build the store"""
        if not self.finished:
            truncated = 0
            for tid in sorted(self.cost_counters):
                while self.depth(tid) > 0:
                    self.tuples.append(self.on_return(tid, truncated=True))
                    truncated += 1
            if truncated:
                log.info(f"Trace ended with {truncated:,} pending activations (emitted as truncated)")
            self.finished = True
        return ProfileStore(self.tuples)
