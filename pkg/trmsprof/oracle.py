"""
Naive reference profiler

Keeps explicit cell sets for every pending activation of every thread and
updates all of them on each access. Quadratic, test-only; it defines the
expected TRMS, RMS and induced-access counts the fast profiler must match.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Set, Tuple

from trmsprof.errors import OracleMismatch, ReturnOnEmptyStack
from trmsprof.replay import TraceReplayer
from trmsprof.shadow_memory import KERNEL_WRITER
from trmsprof.store import ProfileStore, ProfileTuple

log = logging.getLogger(__name__)


@dataclass
class NaiveActivation:
    rtn: int
    entry_cost: int
    # cells accessed by the activation (or finished descendants) and not
    # overwritten by another thread or the kernel since
    L: Set[int] = field(default_factory=set)
    seen_ever: Set[int] = field(default_factory=set)
    trms: int = 0
    rms: int = 0
    induced_thread: int = 0
    induced_external: int = 0
    self_induced_thread: int = 0
    self_induced_external: int = 0


class NaiveSession(TraceReplayer):

    def __init__(self, granularity: int = 1):
        super().__init__(granularity=granularity)
        self.stacks: Dict[int, List[NaiveActivation]] = {}
        # per thread: cells touched since their latest foreign overwrite
        self.touched: Dict[int, Set[int]] = {}
        self.last_writer: Dict[int, int] = {}

    def add_thread(self, tid: int) -> None:
        self.stacks[tid] = []
        self.touched[tid] = set()

    def depth(self, tid: int) -> int:
        return len(self.stacks[tid])

    def top_routine(self, tid: int) -> Optional[int]:
        stack = self.stacks[tid]
        return stack[-1].rtn if stack else None

    def on_call(self, tid: int, routine: int) -> None:
        self.stacks[tid].append(NaiveActivation(routine, self.cost_counters[tid]))

    def on_return(self, tid: int, truncated: bool = False) -> ProfileTuple:
        stack = self.stacks[tid]
        if not stack:
            raise ReturnOnEmptyStack(tid)
        act = stack.pop()
        return ProfileTuple(
            rtn=act.rtn, tid=tid, trms=act.trms, rms=act.rms,
            cost=self.cost_counters[tid] - act.entry_cost,
            induced_thread=act.induced_thread, induced_external=act.induced_external,
            truncated=truncated,
            self_induced_thread=act.self_induced_thread,
            self_induced_external=act.self_induced_external,
        )

    def on_switch(self) -> None:
        pass

    def on_read(self, tid: int, cell: int) -> None:
        stack = self.stacks[tid]
        writer = self.last_writer.get(cell)
        induced = writer is not None and cell not in self.touched[tid]

        for act in stack:
            if cell not in act.L:
                act.trms += 1
                act.L.add(cell)
            if cell not in act.seen_ever:
                act.rms += 1
                act.seen_ever.add(cell)

        if induced:
            external = writer == KERNEL_WRITER
            for act in stack:
                if external:
                    act.induced_external += 1
                else:
                    act.induced_thread += 1
            if external:
                stack[-1].self_induced_external += 1
            else:
                stack[-1].self_induced_thread += 1
        self.touched[tid].add(cell)

    def _invalidate(self, cell: int, keep: Optional[int]) -> None:
        for tid, stack in self.stacks.items():
            if tid == keep:
                continue
            self.touched[tid].discard(cell)
            for act in stack:
                act.L.discard(cell)

    def on_write(self, tid: int, cell: int) -> None:
        for act in self.stacks[tid]:
            act.L.add(cell)
            act.seen_ever.add(cell)
        self.touched[tid].add(cell)
        self._invalidate(cell, keep=tid)
        self.last_writer[cell] = tid

    def on_kernel_write(self, tid: int, cell: int) -> None:
        self._invalidate(cell, keep=None)
        self.last_writer[cell] = KERNEL_WRITER

    def pending_sizes(self, tid: int) -> List[Tuple[int, int]]:
        """(TRMS, RMS) of each pending activation of `tid`, bottom to top"""
        return [(act.trms, act.rms) for act in self.stacks.get(tid, [])]


def naive_run(trace, granularity: int = 1) -> ProfileStore:
    session = NaiveSession(granularity)
    session.replay(trace)
    return session.finish()


_COMPARED = [f.name for f in fields(ProfileTuple)]


def compare_stores(fast: ProfileStore, naive: ProfileStore) -> List[str]:
    """
    Describe every tuple where two stores disagree

    Both replays emit tuples in the same order, so tuples are paired by
    position.
    """
    mismatches = []
    if len(fast) != len(naive):
        mismatches.append(f"tuple count {len(fast)} != {len(naive)}")
    for index, (a, b) in enumerate(zip(fast, naive)):
        diffs = [
            f"{name} {getattr(a, name)} != {getattr(b, name)}"
            for name in _COMPARED if getattr(a, name) != getattr(b, name)
        ]
        if diffs:
            mismatches.append(f"#{index} rtn={a.rtn} tid={a.tid}: {', '.join(diffs)}")
    return mismatches


def check_against_oracle(fast: ProfileStore, trace, granularity: int = 1) -> None:
    """
    Raises:
        OracleMismatch: the naive replay disagrees with `fast`
    """
    mismatches = compare_stores(fast, naive_run(trace, granularity))
    if mismatches:
        raise OracleMismatch(mismatches)
    log.info(f"✓ Oracle check passed on {len(fast):,} tuples")
