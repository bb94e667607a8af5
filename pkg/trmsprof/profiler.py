"""
Read/write timestamping profiler

Computes, for every routine activation, its threaded read memory size (TRMS,
which also counts reads of cells another thread or the kernel overwrote since
the activation last touched them) and its plain read memory size (RMS), in a
single pass over the merged trace.

State per thread: a shadow stack of pending frames carrying partial counters
(the true value for frame i is the sum of partials from i to the top) and a
timestamp table ts_t[cell] with the count value at the thread's latest access.
Globally: wts[cell], the count value at the latest write, tagged with the
writer. `count` advances only on calls, thread switches and kernel writes.
"""

import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from trmsprof.config import Config
from trmsprof.errors import InvariantViolation, ReturnOnEmptyStack
from trmsprof.overflow import maybe_renumber
from trmsprof.replay import TraceReplayer
from trmsprof.shadow_memory import KERNEL_WRITER, GlobalShadow, TimestampTable
from trmsprof.store import ProfileStore, ProfileTuple
from trmsprof.trace_model import TraceEvent

log = logging.getLogger(__name__)


@dataclass
class ShadowStackFrame:
    rtn: int
    ts: int
    entry_cost: int
    partial_trms: int = 0
    partial_rms: int = 0
    # inclusive counts roll up into the parent on return; self counts do not
    induced_thread: int = 0
    induced_external: int = 0
    self_induced_thread: int = 0
    self_induced_external: int = 0


@dataclass
class ThreadState:
    tid: int
    ts_table: TimestampTable
    stack: List[ShadowStackFrame] = field(default_factory=list)
    # frame timestamps, bottom to top (strictly increasing)
    stamps: List[int] = field(default_factory=list)

    @property
    def top(self) -> ShadowStackFrame:
        return self.stack[-1]


def find_ancestor(stamps: List[int], timestamp: int,
                  key: Optional[Callable[[int], int]] = None) -> int:
    """
    Index of the deepest pending frame started at or before `timestamp`

    Args:
        stamps: Strictly increasing frame timestamps
        timestamp: A thread's latest-access timestamp for some cell
        key: Optional key passed to bisect (lets callers count comparisons)

    Returns:
        Max i with stamps[i] <= timestamp, or -1 when every frame is younger
    """
    if key is None:
        return bisect_right(stamps, timestamp) - 1
    return bisect_right(stamps, timestamp, key=key) - 1


class ProfilerSession(TraceReplayer):
    """Single-threaded session over one merged trace"""

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()
        super().__init__(granularity=self.config.granularity)
        self.width = self.config.counter_width
        self.limit = 1 << self.width
        self.margin = self.config.renumber_margin
        self._threshold = (self.limit - 1) - self.margin
        self.count = 0
        self.renumber_count = 0
        self.max_depth = 0
        self.global_shadow = GlobalShadow(self.width, *self._geometry())
        self.threads: Dict[int, ThreadState] = {}

        self._oracle = None
        if self.config.debug_invariants:
            from trmsprof.oracle import NaiveSession
            self._oracle = NaiveSession(granularity=self.granularity)

    def _geometry(self) -> Tuple[int, int, int]:
        return (self.config.primary_size, self.config.secondary_size, self.config.chunk_size)

    def _tick(self) -> None:
        if self.count >= self._threshold:
            maybe_renumber(self, self.margin)
        self.count += 1

    # ------------------------------------------------------------------------
    # Stack handlers
    # ------------------------------------------------------------------------

    def add_thread(self, tid: int) -> None:
        self.threads[tid] = ThreadState(tid, TimestampTable(self.width, *self._geometry()))

    def depth(self, tid: int) -> int:
        return len(self.threads[tid].stack)

    def top_routine(self, tid: int) -> Optional[int]:
        stack = self.threads[tid].stack
        return stack[-1].rtn if stack else None

    def on_call(self, tid: int, routine: int) -> None:
        self._tick()
        thread = self.threads[tid]
        thread.stack.append(ShadowStackFrame(routine, self.count, self.cost_counters[tid]))
        thread.stamps.append(self.count)
        self.max_depth = max(self.max_depth, len(thread.stack))

    def on_return(self, tid: int, truncated: bool = False) -> ProfileTuple:
        thread = self.threads[tid]
        if not thread.stack:
            raise ReturnOnEmptyStack(tid)
        frame = thread.stack.pop()
        thread.stamps.pop()
        result = ProfileTuple(
            rtn=frame.rtn, tid=tid,
            trms=frame.partial_trms, rms=frame.partial_rms,
            cost=self.cost_counters[tid] - frame.entry_cost,
            induced_thread=frame.induced_thread,
            induced_external=frame.induced_external,
            truncated=truncated,
            self_induced_thread=frame.self_induced_thread,
            self_induced_external=frame.self_induced_external,
        )
        if thread.stack:
            parent = thread.top
            parent.partial_trms += frame.partial_trms
            parent.partial_rms += frame.partial_rms
            parent.induced_thread += frame.induced_thread
            parent.induced_external += frame.induced_external
        return result

    def on_switch(self) -> None:
        self._tick()

    # ------------------------------------------------------------------------
    # Memory handlers
    # ------------------------------------------------------------------------

    def on_read(self, tid: int, cell: int) -> None:
        thread = self.threads[tid]
        top = thread.stack[-1]
        ts = thread.ts_table.get(cell)
        wts, writer = self.global_shadow.wts.get_tagged(cell)

        if ts < wts:
            # induced first-access: counted again for every pending frame
            top.partial_trms += 1
            assert writer != tid, f"thread {tid} induced its own read of cell {cell}"
            if writer == KERNEL_WRITER:
                top.induced_external += 1
                top.self_induced_external += 1
            else:
                top.induced_thread += 1
                top.self_induced_thread += 1
            if ts < top.ts:
                top.partial_rms += 1
                if ts != 0:
                    ancestor = find_ancestor(thread.stamps, ts)
                    if ancestor >= 0:
                        thread.stack[ancestor].partial_rms -= 1
        elif ts < top.ts:
            top.partial_trms += 1
            top.partial_rms += 1
            if ts != 0:
                ancestor = find_ancestor(thread.stamps, ts)
                if ancestor >= 0:
                    frame = thread.stack[ancestor]
                    frame.partial_trms -= 1
                    frame.partial_rms -= 1

        thread.ts_table.set(cell, self.count)

    def on_write(self, tid: int, cell: int) -> None:
        self.threads[tid].ts_table.set(cell, self.count)
        self.global_shadow.record_write(cell, self.count, tid)

    def on_kernel_write(self, tid: int, cell: int) -> None:
        self._tick()
        self.global_shadow.record_write(cell, self.count, KERNEL_WRITER)

    # ------------------------------------------------------------------------
    # Introspection / self-checks
    # ------------------------------------------------------------------------

    def pending_sizes(self, tid: int) -> List[Tuple[int, int]]:
        """(TRMS, RMS) of each pending frame of `tid`, bottom to top (suffix sums)"""
        sizes = []
        trms = rms = 0
        for frame in reversed(self.threads[tid].stack):
            trms += frame.partial_trms
            rms += frame.partial_rms
            sizes.append((trms, rms))
        return sizes[::-1]

    def after_event(self, index: int, event: TraceEvent) -> None:
        if self._oracle is None:
            return
        self._oracle.process(event)
        for tid in self.threads:
            expected = self._oracle.pending_sizes(tid)
            actual = self.pending_sizes(tid)
            if expected != actual:
                raise InvariantViolation(index, tid, expected, actual)

    def stats(self) -> Dict[str, int]:
        chunks = self.global_shadow.wts.allocated_chunks
        chunks += sum(t.ts_table.allocated_chunks for t in self.threads.values())
        return {
            'events': self.events_seen,
            'threads': len(self.threads),
            'switches': self.switches,
            'count': self.count,
            'renumberings': self.renumber_count,
            'max_depth': self.max_depth,
            'shadow_chunks': chunks,
        }


def run(trace, config: Optional[Config] = None) -> ProfileStore:
    """
    Profile a merged trace

    Args:
        trace: MergedTrace or any iterable of events in merged order
        config: Session configuration (defaults when None)

    Returns:
        ProfileStore with one tuple per activation, in emission order
    """
    session = ProfilerSession(config)
    session.replay(trace)
    store = session.finish()
    log.info(f"✓ Replayed {session.events_seen:,} events into {len(store):,} tuples")
    return store
