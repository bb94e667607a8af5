"""
Trace model: event vocabulary, per-thread trace files, k-way merge

Trace file format (UTF-8 text, one event per line, `#` starts a comment):

    <ts> call <routine-id>
    <ts> ret
    <ts> rd  <addr-hex> <size>
    <ts> wr  <addr-hex> <size>
    <ts> krd <addr-hex> <size>
    <ts> kwr <addr-hex> <size>
    <ts> sys <syscall> <addr-hex> <size>     (expands to krd or kwr)
    <ts> cost <n>

One file per thread, named `<base>.t<tid>.trace`, plus an optional
`<base>.names` sidecar mapping routine ids to names (`<id> <name>`).
"""

import heapq
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Union

from trmsprof.errors import MalformedLine, NonMonotonicTimestamp

log = logging.getLogger(__name__)

TRACE_FILE_PATTERN = re.compile(r"\.t(\d+)\.trace$")


# ============================================================================
# EVENT VOCABULARY
# ============================================================================

class EventKind(str, Enum):
    CALL = "call"
    RETURN = "ret"
    READ = "rd"
    WRITE = "wr"
    KERNEL_READ = "krd"
    KERNEL_WRITE = "kwr"
    COST = "cost"


MEMORY_KINDS = frozenset({
    EventKind.READ, EventKind.WRITE, EventKind.KERNEL_READ, EventKind.KERNEL_WRITE,
})

# Wrapped system calls and the event each one produces on its buffer.
# A thread sending data makes the kernel read its memory; receiving data
# makes the kernel write it.
SYSCALL_EVENT_KINDS = {
    'write': EventKind.KERNEL_READ,
    'sendto': EventKind.KERNEL_READ,
    'pwrite64': EventKind.KERNEL_READ,
    'writev': EventKind.KERNEL_READ,
    'msgsnd': EventKind.KERNEL_READ,
    'pwritev': EventKind.KERNEL_READ,
    'read': EventKind.KERNEL_WRITE,
    'recvfrom': EventKind.KERNEL_WRITE,
    'pread64': EventKind.KERNEL_WRITE,
    'readv': EventKind.KERNEL_WRITE,
    'msgrcv': EventKind.KERNEL_WRITE,
    'preadv': EventKind.KERNEL_WRITE,
}


class TraceEvent(NamedTuple):
    """One timestamped action of one thread"""

    tid: int
    ts: int
    kind: EventKind
    routine: int = -1
    addr: int = 0
    size: int = 0
    amount: int = 0

    @classmethod
    def call(cls, tid: int, ts: int, routine: int) -> "TraceEvent":
        return cls(tid, ts, EventKind.CALL, routine=routine)

    @classmethod
    def ret(cls, tid: int, ts: int) -> "TraceEvent":
        return cls(tid, ts, EventKind.RETURN)

    @classmethod
    def read(cls, tid: int, ts: int, addr: int, size: int = 1) -> "TraceEvent":
        return cls(tid, ts, EventKind.READ, addr=addr, size=size)

    @classmethod
    def write(cls, tid: int, ts: int, addr: int, size: int = 1) -> "TraceEvent":
        return cls(tid, ts, EventKind.WRITE, addr=addr, size=size)

    @classmethod
    def kernel_read(cls, tid: int, ts: int, addr: int, size: int = 1) -> "TraceEvent":
        return cls(tid, ts, EventKind.KERNEL_READ, addr=addr, size=size)

    @classmethod
    def kernel_write(cls, tid: int, ts: int, addr: int, size: int = 1) -> "TraceEvent":
        return cls(tid, ts, EventKind.KERNEL_WRITE, addr=addr, size=size)

    @classmethod
    def cost(cls, tid: int, ts: int, amount: int) -> "TraceEvent":
        return cls(tid, ts, EventKind.COST, amount=amount)

    def __str__(self) -> str:
        return f"T{self.tid} {format_event(self)}"


def format_event(event: TraceEvent) -> str:
    """Render an event as one trace-file line (without the thread id)"""
    kind = event.kind
    if kind is EventKind.CALL:
        return f"{event.ts} call {event.routine}"
    if kind is EventKind.RETURN:
        return f"{event.ts} ret"
    if kind is EventKind.COST:
        return f"{event.ts} cost {event.amount}"
    return f"{event.ts} {kind.value} {event.addr:#x} {event.size}"


def expand_access(event: TraceEvent, granularity: int = 1) -> range:
    """
    Cells covered by a sized memory access

    Cell ids are floor(addr/G) .. floor((addr+size-1)/G) inclusive.

    Args:
        event: Memory event (rd/wr/krd/kwr)
        granularity: Cell width G in address units (>= 1)

    Returns:
        Range of cell ids
    """
    first = event.addr // granularity
    last = (event.addr + event.size - 1) // granularity
    return range(first, last + 1)


# ============================================================================
# PARSING
# ============================================================================

_DECIMAL = re.compile(r"[0-9]+")
_HEX = re.compile(r"(?:0[xX])?[0-9a-fA-F]+")


def _parse_int(token: str, line_number: int, source: str, what: str, base: int = 10) -> int:
    pattern = _HEX if base == 16 else _DECIMAL
    if not pattern.fullmatch(token):
        raise MalformedLine(line_number, f"bad {what} {token!r}", source)
    return int(token, base)


def _parse_line(fields: List[str], tid: int, line_number: int, source: str) -> TraceEvent:
    ts = _parse_int(fields[0], line_number, source, "timestamp")
    if len(fields) < 2:
        raise MalformedLine(line_number, "missing event kind", source)
    word = fields[1]
    args = fields[2:]

    if word == 'sys':
        if len(args) != 3:
            raise MalformedLine(line_number, "sys expects <syscall> <addr> <size>", source)
        syscall, args = args[0], args[1:]
        if syscall not in SYSCALL_EVENT_KINDS:
            raise MalformedLine(line_number, f"unmapped system call {syscall!r}", source)
        kind = SYSCALL_EVENT_KINDS[syscall]
    else:
        try:
            kind = EventKind(word)
        except ValueError:
            raise MalformedLine(line_number, f"unknown event kind {word!r}", source) from None

    if kind is EventKind.CALL:
        if len(args) != 1:
            raise MalformedLine(line_number, "call expects one routine id", source)
        return TraceEvent.call(tid, ts, _parse_int(args[0], line_number, source, "routine id"))

    if kind is EventKind.RETURN:
        if args:
            raise MalformedLine(line_number, "ret takes no arguments", source)
        return TraceEvent.ret(tid, ts)

    if kind is EventKind.COST:
        if len(args) != 1:
            raise MalformedLine(line_number, "cost expects one amount", source)
        return TraceEvent.cost(tid, ts, _parse_int(args[0], line_number, source, "cost"))

    if len(args) != 2:
        raise MalformedLine(line_number, f"{kind.value} expects <addr-hex> <size>", source)
    addr = _parse_int(args[0], line_number, source, "address", base=16)
    size = _parse_int(args[1], line_number, source, "size")
    if size < 1:
        raise MalformedLine(line_number, "access size must be >= 1", source)
    return TraceEvent(tid, ts, kind, addr=addr, size=size)


def iter_thread_trace(source: Iterable[Union[str, bytes]], tid: int,
                      name: str = "<trace>") -> Iterator[TraceEvent]:
    """
    Lazily parse one thread's trace

    Args:
        source: Line iterable (text or UTF-8 bytes), e.g. an open file
        tid: Thread id assigned to every event
        name: Source name used in error messages

    Yields:
        TraceEvent in file order

    Raises:
        MalformedLine, NonMonotonicTimestamp
    """
    previous_ts = None
    for line_number, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode('utf-8')
            except UnicodeDecodeError:
                raise MalformedLine(line_number, "invalid UTF-8", name) from None
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        event = _parse_line(line.split(), tid, line_number, name)
        if previous_ts is not None and event.ts <= previous_ts:
            raise NonMonotonicTimestamp(line_number, previous_ts, event.ts, name)
        previous_ts = event.ts
        yield event


def parse_thread_trace(source: Iterable[Union[str, bytes]], tid: int,
                       name: str = "<trace>") -> List[TraceEvent]:
    """Parse one thread's trace into a list (see iter_thread_trace)"""
    return list(iter_thread_trace(source, tid, name))


def stream_thread_trace(path: Union[str, Path], tid: int) -> Iterator[TraceEvent]:
    """Generator over a trace file; the file stays open while it is consumed"""
    path = Path(path)
    with open(path, 'rb') as f:
        yield from iter_thread_trace(f, tid, path.name)


def _load_one(tid: int, path: Path) -> List[TraceEvent]:
    events = list(stream_thread_trace(path, tid))
    log.info(f"✓ Parsed {len(events):,} events from {path.name}")
    return events


def load_thread_traces(paths: Mapping[int, Path], workers: int = 1) -> Dict[int, List[TraceEvent]]:
    """
    Parse several thread files into memory

    Args:
        paths: Thread id -> trace file
        workers: Parser threads; files are parsed concurrently when > 1

    Returns:
        Thread id -> events
    """
    tids = sorted(paths)
    if workers > 1 and len(tids) > 1:
        log.info(f"Parsing {len(tids)} trace files with {workers} workers...")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {tid: pool.submit(_load_one, tid, Path(paths[tid])) for tid in tids}
            return {tid: futures[tid].result() for tid in tids}
    return {tid: _load_one(tid, Path(paths[tid])) for tid in tids}


# ============================================================================
# FILE DISCOVERY / SIDECAR
# ============================================================================

def discover_trace_files(base: Union[str, Path]) -> Dict[int, Path]:
    """
    Find `<base>.t<tid>.trace` files

    Args:
        base: Trace base path (directory + stem)

    Returns:
        Thread id -> path, empty if nothing matches
    """
    base = Path(base)
    directory = base.parent if str(base.parent) else Path('.')
    found = {}
    for candidate in directory.glob(f"{base.name}.t*.trace"):
        match = TRACE_FILE_PATTERN.search(candidate.name)
        if match and candidate.name[:match.start()] == base.name:
            found[int(match.group(1))] = candidate
    return dict(sorted(found.items()))


def load_names(path: Union[str, Path]) -> Dict[int, str]:
    """Read a `.names` sidecar; a missing file yields an empty map"""
    path = Path(path)
    if not path.exists():
        return {}
    names = {}
    # display-only; undecodable bytes become U+FFFD
    with open(path, 'r', encoding='utf-8', errors='replace') as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise MalformedLine(line_number, "expected <id> <name>", path.name)
            names[_parse_int(parts[0], line_number, path.name, "routine id")] = parts[1].strip()
    return names


def write_names(names: Mapping[int, str], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        for rtn in sorted(names):
            f.write(f"{rtn} {names[rtn]}\n")
    return path


def write_thread_trace(events: Iterable[TraceEvent], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for event in events:
            f.write(format_event(event) + "\n")
    return path


def write_traces(threads: Mapping[int, Iterable[TraceEvent]], base: Union[str, Path],
                 names: Optional[Mapping[int, str]] = None) -> List[Path]:
    """
    Write one file per thread plus the names sidecar

    Returns:
        Paths written, trace files first
    """
    base = Path(base)
    written = [
        write_thread_trace(threads[tid], base.parent / f"{base.name}.t{tid}.trace")
        for tid in sorted(threads)
    ]
    if names:
        written.append(write_names(names, base.parent / f"{base.name}.names"))
    return written


# ============================================================================
# MERGE
# ============================================================================

def _merge_key(event: TraceEvent):
    return (event.ts, event.tid)


def _checked(events: Iterable[TraceEvent], tid: int) -> Iterator[TraceEvent]:
    previous_ts = None
    for position, event in enumerate(events, start=1):
        if previous_ts is not None and event.ts <= previous_ts:
            raise NonMonotonicTimestamp(position, previous_ts, event.ts, f"thread {tid}")
        previous_ts = event.ts
        yield event


def iter_merged(traces: Mapping[int, Iterable[TraceEvent]]) -> Iterator[TraceEvent]:
    """
    Streaming k-way merge ordered by (ts, tid)

    Equal timestamps from different threads come out by ascending thread id.
    A thread switch is implied wherever consecutive events differ in tid.
    """
    streams = [_checked(traces[tid], tid) for tid in sorted(traces)]
    return heapq.merge(*streams, key=_merge_key)


class MergedTrace:
    """Immutable, totally ordered merge of per-thread traces"""

    def __init__(self, events: Iterable[TraceEvent]):
        self.events = tuple(events)

    @classmethod
    def from_threads(cls, traces: Mapping[int, Iterable[TraceEvent]]) -> "MergedTrace":
        return cls(iter_merged(traces))

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __getitem__(self, index):
        return self.events[index]

    @property
    def thread_ids(self) -> List[int]:
        return sorted({event.tid for event in self.events})

    def switch_positions(self) -> List[int]:
        """Indices i such that a thread switch precedes events[i]"""
        return [
            i for i in range(1, len(self.events))
            if self.events[i].tid != self.events[i - 1].tid
        ]


def merge(traces: Mapping[int, Iterable[TraceEvent]]) -> MergedTrace:
    """Materialised merge (see iter_merged)"""
    return MergedTrace.from_threads(traces)
