"""
Equivalence of the shadow-stack profiler and the naive set-based replay
"""

from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from conftest import by_routine, load_golden
from trmsprof.config import Config
from trmsprof.errors import InvariantViolation, OracleMismatch
from trmsprof.oracle import NaiveSession, check_against_oracle, compare_stores, naive_run
from trmsprof.profiler import ProfilerSession, run
from trmsprof.store import ProfileStore
from trmsprof.tracegen import gen_external_read, gen_producer_consumer, gen_random

KERNEL_RATIOS = (0.0, 0.1, 0.3)


def test_naive_example_2a():
    tuples = by_routine(naive_run(load_golden("example-2a")))
    assert (tuples[1].trms, tuples[1].rms, tuples[1].induced_thread) == (2, 1, 1)


def test_naive_example_2b():
    tuples = by_routine(naive_run(load_golden("example-2b")))
    assert (tuples[1].trms, tuples[1].rms) == (2, 1)
    assert (tuples[3].trms, tuples[3].rms) == (1, 1)


def test_naive_patterns():
    (producer, consumer) = naive_run(gen_producer_consumer(100).merged())
    assert (consumer.trms, consumer.rms) == (100, 1)
    (reader,) = naive_run(gen_external_read(100).merged())
    assert (reader.trms, reader.rms, reader.induced_external) == (100, 1, 100)


@settings(max_examples=500, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    threads=st.integers(1, 8),
    cells=st.integers(1, 64),
    events=st.integers(0, 1500),
    kernel_ratio=st.sampled_from(KERNEL_RATIOS),
)
def test_fast_path_matches_naive(seed, threads, cells, events, kernel_ratio):
    trace = gen_random(seed=seed, threads=threads, cells=cells, events=events,
                       kernel_ratio=kernel_ratio).merged()
    fast = run(trace, Config(counter_width=64))
    assert compare_stores(fast, naive_run(trace)) == []


@pytest.mark.parametrize("seed", range(12))
def test_fast_path_matches_naive_on_long_traces(seed):
    trace = gen_random(seed=1000 + seed, threads=1 + seed % 8, cells=64, events=10_000,
                       kernel_ratio=KERNEL_RATIOS[seed % 3]).merged()
    assert compare_stores(run(trace), naive_run(trace)) == []


@pytest.mark.parametrize("seed", range(50))
def test_pending_sizes_match_after_every_event(seed):
    trace = gen_random(seed=seed, threads=1 + seed % 5, cells=24, events=400,
                       kernel_ratio=KERNEL_RATIOS[seed % 3]).merged()
    session = ProfilerSession(Config(counter_width=64, debug_invariants=True))
    session.replay(trace)
    assert session.events_seen == len(trace)


def test_debug_invariants_detect_corruption():
    trace = gen_producer_consumer(5).merged()
    session = ProfilerSession(Config(counter_width=64, debug_invariants=True))
    for index, event in enumerate(trace.events[:6]):
        session.process(event)
        session.after_event(index, event)
    session.threads[2].stack[-1].partial_trms += 1
    with pytest.raises(InvariantViolation) as info:
        session.replay(trace.events[6:])
    assert info.value.tid == 2


def test_naive_pending_sizes_bottom_to_top():
    session = NaiveSession()
    session.replay(load_golden("example-2b").events[:7])
    # f read x, g overwrote it, h (under f) re-read it
    assert session.pending_sizes(1) == [(2, 1), (1, 1)]


def test_compare_stores_reports_differences():
    store = run(load_golden("example-2a"))
    altered = ProfileStore([replace(store[0], cost=99)] + store.tuples[1:])
    (message,) = compare_stores(altered, store)
    assert "cost 99" in message
    assert compare_stores(ProfileStore(), store) == ["tuple count 0 != 2"]


def test_check_against_oracle():
    trace = load_golden("example-2b")
    check_against_oracle(run(trace), trace)
    with pytest.raises(OracleMismatch):
        check_against_oracle(ProfileStore(run(trace).tuples[:-1]), trace)
