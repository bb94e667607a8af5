"""
Tests for trace parsing, writing and the k-way merge
"""

import pytest
from hypothesis import given, settings, strategies as st

from trmsprof.errors import MalformedLine, NonMonotonicTimestamp
from trmsprof.trace_model import (
    EventKind,
    MergedTrace,
    TraceEvent,
    discover_trace_files,
    expand_access,
    iter_merged,
    load_names,
    load_thread_traces,
    merge,
    parse_thread_trace,
    write_traces,
)


# ============================================================================
# PARSING
# ============================================================================

def test_parse_every_event_kind():
    lines = [
        "# header comment",
        "1 call 7",
        "2 rd 0x10 4   # trailing comment",
        "",
        "3 wr ff 1",
        "4 krd 0x20 2",
        "5 kwr 0x20 2",
        "6 cost 12",
        "7 ret",
    ]
    events = parse_thread_trace(lines, tid=3)
    assert [e.kind for e in events] == [
        EventKind.CALL, EventKind.READ, EventKind.WRITE, EventKind.KERNEL_READ,
        EventKind.KERNEL_WRITE, EventKind.COST, EventKind.RETURN,
    ]
    assert all(e.tid == 3 for e in events)
    assert events[0].routine == 7
    assert (events[1].addr, events[1].size) == (0x10, 4)
    assert events[2].addr == 0xff
    assert events[5].amount == 12


def test_parse_accepts_bytes_lines():
    events = parse_thread_trace([b"1 call 1\n", b"2 ret\n"], tid=1)
    assert [e.kind for e in events] == [EventKind.CALL, EventKind.RETURN]


@pytest.mark.parametrize("syscall, kind", [
    ("read", EventKind.KERNEL_WRITE),
    ("recvfrom", EventKind.KERNEL_WRITE),
    ("preadv", EventKind.KERNEL_WRITE),
    ("write", EventKind.KERNEL_READ),
    ("sendto", EventKind.KERNEL_READ),
    ("msgsnd", EventKind.KERNEL_READ),
])
def test_sys_directive_maps_to_kernel_access(syscall, kind):
    (event,) = parse_thread_trace([f"5 sys {syscall} 0x40 8"], tid=1)
    assert event.kind is kind
    assert (event.addr, event.size) == (0x40, 8)


@pytest.mark.parametrize("line, reason", [
    ("2 jump 0x10 1", "unknown event kind"),
    ("2 rd 0xzz 1", "bad address"),
    ("2 rd 0x10 0", "size must be >= 1"),
    ("2 rd 0x10", "expects <addr-hex> <size>"),
    ("2 call", "one routine id"),
    ("2 ret 4", "no arguments"),
    ("x call 1", "bad timestamp"),
    ("2", "missing event kind"),
    ("2 sys ioctl 0x10 4", "unmapped system call"),
    ("+2 call 1", "bad timestamp"),
    ("2 call 1_000", "bad routine id"),
    ("2 call -1", "bad routine id"),
    ("2 rd -0x10 1", "bad address"),
    ("2 rd 0x1_0 1", "bad address"),
    ("2 rd 0x10 +4", "bad size"),
    ("2 cost 0x10", "bad cost"),
])
def test_malformed_lines_report_line_number(line, reason):
    with pytest.raises(MalformedLine) as info:
        parse_thread_trace(["1 call 1", line], tid=1, name="bad.t1.trace")
    assert info.value.line_number == 2
    assert reason in info.value.reason
    assert "bad.t1.trace:2" in str(info.value)


def test_non_monotonic_timestamp_rejected():
    with pytest.raises(NonMonotonicTimestamp) as info:
        parse_thread_trace(["1 call 1", "4 rd 0x1 1", "4 ret"], tid=1)
    assert (info.value.line_number, info.value.previous, info.value.current) == (3, 4, 4)


def test_invalid_utf8_is_a_malformed_line():
    source = [b"1 call 1\n", b"2 rd 0x10 4 # \xff\xfe\n", b"3 ret\n"]
    with pytest.raises(MalformedLine) as info:
        parse_thread_trace(source, tid=1, name="bin.t1.trace")
    assert info.value.line_number == 2
    assert info.value.reason == "invalid UTF-8"


def test_names_sidecar_tolerates_invalid_utf8(tmp_path):
    path = tmp_path / "x.names"
    path.write_bytes(b"1 f\n2 g\xff\n")
    names = load_names(path)
    assert names[1] == 'f'
    assert names[2].startswith('g')


@pytest.mark.parametrize("addr, size, granularity, cells", [
    (5, 1, 1, [5]),
    (5, 4, 1, [5, 6, 7, 8]),
    (5, 4, 4, [1, 2]),
    (8, 8, 4, [2, 3]),
    (0, 1, 64, [0]),
])
def test_expand_access(addr, size, granularity, cells):
    event = TraceEvent.read(1, 1, addr, size)
    assert list(expand_access(event, granularity)) == cells


# ============================================================================
# FILES
# ============================================================================

def test_write_discover_and_reload(tmp_path):
    threads = {
        1: [TraceEvent.call(1, 1, 4), TraceEvent.read(1, 3, 0x10, 2), TraceEvent.ret(1, 5)],
        2: [TraceEvent.kernel_write(2, 2, 0x10, 1), TraceEvent.cost(2, 4, 9)],
    }
    write_traces(threads, tmp_path / "run", names={4: "compute"})

    paths = discover_trace_files(tmp_path / "run")
    assert sorted(paths) == [1, 2]
    assert load_thread_traces(paths) == threads
    assert load_thread_traces(paths, workers=2) == threads
    assert load_names(tmp_path / "run.names") == {4: "compute"}


def test_discover_ignores_other_bases(tmp_path):
    (tmp_path / "run.t1.trace").write_text("1 ret\n")
    (tmp_path / "run2.t1.trace").write_text("1 ret\n")
    (tmp_path / "run.t2.trace.bak").write_text("1 ret\n")
    assert list(discover_trace_files(tmp_path / "run")) == [1]
    assert discover_trace_files(tmp_path / "missing") == {}


def test_missing_names_file_is_empty(tmp_path):
    assert load_names(tmp_path / "none.names") == {}


# ============================================================================
# MERGE
# ============================================================================

def test_merge_orders_by_timestamp_then_thread():
    traces = {
        2: [TraceEvent.read(2, 1, 0, 1), TraceEvent.read(2, 3, 0, 1)],
        1: [TraceEvent.read(1, 1, 0, 1), TraceEvent.read(1, 2, 0, 1)],
    }
    merged = merge(traces)
    assert [(e.ts, e.tid) for e in merged] == [(1, 1), (1, 2), (2, 1), (3, 2)]
    assert merged.switch_positions() == [1, 2, 3]
    assert merged.thread_ids == [1, 2]


def test_empty_merge():
    merged = merge({})
    assert len(merged) == 0
    assert merged.switch_positions() == []


def test_iter_merged_rejects_unsorted_stream():
    traces = {1: [TraceEvent.ret(1, 5), TraceEvent.ret(1, 3)]}
    with pytest.raises(NonMonotonicTimestamp):
        list(iter_merged(traces))


thread_timestamps = st.lists(st.integers(1, 50), max_size=20, unique=True).map(sorted)


@settings(max_examples=200)
@given(st.dictionaries(st.integers(1, 6), thread_timestamps, max_size=5))
def test_merge_is_sorted_permutation(stamps):
    traces = {tid: [TraceEvent.cost(tid, ts, 1) for ts in tss] for tid, tss in stamps.items()}
    merged = MergedTrace.from_threads(traces)
    keys = [(e.ts, e.tid) for e in merged]
    assert keys == sorted(keys)
    assert sorted(merged) == sorted(e for events in traces.values() for e in events)
