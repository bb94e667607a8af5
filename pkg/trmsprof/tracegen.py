"""
Synthetic trace generators

Deterministic scenarios reproduce the classic shared-memory input patterns
(a routine re-reading data another thread rewrote, producer/consumer,
buffered device reads, a cost-vs-size scaling family); `gen_random` drives
property tests.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from trmsprof.trace_model import MergedTrace, TraceEvent, merge, write_traces

log = logging.getLogger(__name__)


@dataclass
class TraceSet:
    """Per-thread event lists plus the routine-name map for the sidecar"""

    threads: Dict[int, List[TraceEvent]]
    names: Dict[int, str] = field(default_factory=dict)

    def merged(self) -> MergedTrace:
        return merge(self.threads)

    def write(self, base: Union[str, Path]) -> List[Path]:
        paths = write_traces(self.threads, base, self.names)
        log.info(f"✓ Wrote {len(self.threads)} thread trace(s) to {Path(base).parent}")
        return paths

    @property
    def event_count(self) -> int:
        return sum(len(events) for events in self.threads.values())


class _Timeline:
    """Appends events in program order, stamping them with one global clock"""

    def __init__(self, names: Dict[int, str]):
        self.clock = 0
        self.threads: Dict[int, List[TraceEvent]] = {}
        self.names = names

    def _emit(self, tid: int, factory, *args) -> None:
        self.clock += 1
        self.threads.setdefault(tid, []).append(factory(tid, self.clock, *args))

    def call(self, tid: int, routine: int) -> None:
        self._emit(tid, TraceEvent.call, routine)

    def ret(self, tid: int) -> None:
        self._emit(tid, TraceEvent.ret)

    def read(self, tid: int, addr: int, size: int = 1) -> None:
        self._emit(tid, TraceEvent.read, addr, size)

    def write(self, tid: int, addr: int, size: int = 1) -> None:
        self._emit(tid, TraceEvent.write, addr, size)

    def kernel_write(self, tid: int, addr: int, size: int = 1) -> None:
        self._emit(tid, TraceEvent.kernel_write, addr, size)

    def trace_set(self) -> TraceSet:
        return TraceSet(self.threads, dict(self.names))


# ============================================================================
# WORKED EXAMPLES
# ============================================================================

T1, T2 = 1, 2
CELL_X = 0x10


def gen_example_2a() -> TraceSet:
    """f on T1 reads x, g on T2 overwrites x, f reads x again"""
    f, g = 1, 2
    tl = _Timeline({f: 'f', g: 'g'})
    tl.call(T1, f)
    tl.read(T1, CELL_X)
    tl.call(T2, g)
    tl.write(T2, CELL_X)
    tl.ret(T2)
    tl.read(T1, CELL_X)
    tl.ret(T1)
    return tl.trace_set()


def gen_example_2b() -> TraceSet:
    """As 2a, but the re-read happens in h (called by f), then f reads x once more"""
    f, g, h = 1, 2, 3
    tl = _Timeline({f: 'f', g: 'g', h: 'h'})
    tl.call(T1, f)
    tl.read(T1, CELL_X)
    tl.call(T2, g)
    tl.write(T2, CELL_X)
    tl.ret(T2)
    tl.call(T1, h)
    tl.read(T1, CELL_X)
    tl.ret(T1)
    tl.read(T1, CELL_X)
    tl.ret(T1)
    return tl.trace_set()


# ============================================================================
# PATTERNS
# ============================================================================

def gen_producer_consumer(n: int, split: bool = False) -> TraceSet:
    """
    Producer (T1) writes x, consumer (T2) reads it, n strictly alternating rounds

    Args:
        n: Number of rounds
        split: Wrap each consumer read in its own consumeData activation
            instead of counting all reads against one consumer activation
    """
    producer, consumer, consume_data = 1, 2, 3
    names = {producer: 'producer', consumer: 'consumer'}
    if split:
        names[consume_data] = 'consumeData'
    tl = _Timeline(names)
    tl.call(T1, producer)
    tl.call(T2, consumer)
    for _ in range(n):
        tl.write(T1, CELL_X)
        if split:
            tl.call(T2, consume_data)
            tl.read(T2, CELL_X)
            tl.ret(T2)
        else:
            tl.read(T2, CELL_X)
    tl.ret(T1)
    tl.ret(T2)
    return tl.trace_set()


def gen_external_read(n: int, buffer: int = 0x100) -> TraceSet:
    """Each iteration the kernel fills a two-cell buffer; only its first cell is read"""
    external_read = 1
    tl = _Timeline({external_read: 'externalRead'})
    tl.call(T1, external_read)
    for _ in range(n):
        tl.kernel_write(T1, buffer)
        tl.kernel_write(T1, buffer + 1)
        tl.read(T1, buffer)
    tl.ret(T1)
    return tl.trace_set()


def gen_scaling_scenario(n: int) -> TraceSet:
    """
    n activations of r where activation i has cost i and TRMS i

    Activation i reads ceil(i/2) fresh cells, then floor(i/2) times a helper
    thread overwrites the first of them and r reads it again. So RMS is
    ceil(i/2): a plain RMS profile folds the i sizes onto half as many
    points, doubling the apparent slope of cost against size.
    """
    main, r, helper = 1, 2, 3
    tl = _Timeline({main: 'main', r: 'r', helper: 'helper'})
    tl.call(T1, main)
    tl.call(T2, helper)
    next_cell = 0x1000
    for i in range(1, n + 1):
        fresh = math.ceil(i / 2)
        cells = range(next_cell, next_cell + fresh)
        next_cell += fresh
        tl.call(T1, r)
        for cell in cells:
            tl.read(T1, cell)
        for _ in range(i // 2):
            tl.write(T2, cells[0])
            tl.read(T1, cells[0])
        tl.ret(T1)
    tl.ret(T2)
    tl.ret(T1)
    return tl.trace_set()


# ============================================================================
# RANDOM
# ============================================================================

def gen_random(seed: int = 0, threads: int = 4, cells: int = 32, events: int = 1000,
               kernel_ratio: float = 0.1, routines: int = 8, max_size: int = 4,
               cost_ratio: float = 0.02, max_depth: int = 12) -> TraceSet:
    """
    Reproducible pseudo-random trace with balanced call/return nesting

    Args:
        seed: Generator seed; the same arguments always give the same traces
        threads: Number of threads (ids 1..threads)
        cells: Accesses fall in cells [0, cells)
        events: Events drawn before every pending frame is closed
        kernel_ratio: Fraction of memory events issued as kernel read/write
        routines: Distinct routine ids
        max_size: Largest access size
        cost_ratio: Fraction of events that are `cost` directives
        max_depth: Calls per thread never nest deeper than this

    Returns:
        TraceSet; timestamps of different threads may coincide
    """
    rng = np.random.default_rng(seed)
    names = {rtn: f"rtn{rtn}" for rtn in range(routines)}
    per_thread: Dict[int, List[TraceEvent]] = {tid: [] for tid in range(1, threads + 1)}
    depth = {tid: 0 for tid in per_thread}
    last_ts = {tid: 0 for tid in per_thread}
    clock = 0

    def stamp(tid: int) -> int:
        nonlocal clock
        clock = max(clock + int(rng.integers(0, 2)), last_ts[tid] + 1)
        last_ts[tid] = clock
        return clock

    for _ in range(events):
        tid = int(rng.integers(1, threads + 1))
        roll = rng.random()
        events_out = per_thread[tid]
        if roll < 0.15 and depth[tid] < max_depth:
            events_out.append(TraceEvent.call(tid, stamp(tid), int(rng.integers(0, routines))))
            depth[tid] += 1
        elif roll < 0.28 and depth[tid] > 0:
            events_out.append(TraceEvent.ret(tid, stamp(tid)))
            depth[tid] -= 1
        elif roll < 0.28 + cost_ratio:
            events_out.append(TraceEvent.cost(tid, stamp(tid), int(rng.integers(1, 10))))
        else:
            addr = int(rng.integers(0, cells))
            size = min(int(rng.integers(1, max_size + 1)), cells - addr)
            if rng.random() < kernel_ratio:
                factory = TraceEvent.kernel_write if rng.random() < 0.5 else TraceEvent.kernel_read
            else:
                factory = TraceEvent.write if rng.random() < 0.4 else TraceEvent.read
            events_out.append(factory(tid, stamp(tid), addr, size))

    for tid in per_thread:
        for _ in range(depth[tid]):
            per_thread[tid].append(TraceEvent.ret(tid, stamp(tid)))

    return TraceSet({tid: evs for tid, evs in per_thread.items() if evs}, names)


# ============================================================================
# SCENARIO REGISTRY
# ============================================================================

@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    generator: Callable[..., TraceSet]
    parameters: Tuple[str, ...] = ()

    def generate(self, **params) -> TraceSet:
        """Call the generator with the accepted subset of `params` (None = default)"""
        accepted = {k: v for k, v in params.items() if k in self.parameters and v is not None}
        return self.generator(**accepted)


SCENARIOS: Dict[str, Scenario] = {
    s.name: s for s in [
        Scenario('example-2a', "re-read after a foreign write", gen_example_2a),
        Scenario('example-2b', "re-read in a callee, then in the caller", gen_example_2b),
        Scenario('producer-consumer', "one consumer activation, n rounds",
                 gen_producer_consumer, ('n',)),
        Scenario('producer-consumer-split', "one consumeData activation per round",
                 lambda n: gen_producer_consumer(n, split=True), ('n',)),
        Scenario('external-read', "kernel-filled buffer, first cell read",
                 gen_external_read, ('n',)),
        Scenario('scaling', "activation i has cost i, TRMS i, RMS ceil(i/2)",
                 gen_scaling_scenario, ('n',)),
        Scenario('random', "seeded random trace",
                 gen_random, ('seed', 'threads', 'cells', 'events', 'kernel_ratio')),
    ]
}


def get_scenario(name: str) -> Optional[Scenario]:
    return SCENARIOS.get(name)
