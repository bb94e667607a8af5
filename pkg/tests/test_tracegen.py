"""
Tests for the synthetic scenario generators
"""

import pytest

from trmsprof.trace_model import EventKind, discover_trace_files, load_names, load_thread_traces
from trmsprof.tracegen import (
    SCENARIOS,
    gen_example_2a,
    gen_producer_consumer,
    gen_random,
    gen_scaling_scenario,
    get_scenario,
)


def test_random_is_reproducible():
    a = gen_random(seed=42, threads=3, events=500)
    b = gen_random(seed=42, threads=3, events=500)
    assert a.threads == b.threads
    assert gen_random(seed=43, threads=3, events=500).threads != a.threads


@pytest.mark.parametrize("seed", range(10))
def test_random_traces_are_monotonic_and_balanced(seed):
    traces = gen_random(seed=seed, threads=4, cells=16, events=1000, kernel_ratio=0.2)
    for tid, events in traces.threads.items():
        stamps = [e.ts for e in events]
        assert stamps == sorted(set(stamps))
        assert all(e.tid == tid for e in events)
        depth = 0
        for e in events:
            depth += {EventKind.CALL: 1, EventKind.RETURN: -1}.get(e.kind, 0)
            assert 0 <= depth <= 12
        assert depth == 0
        for e in events:
            if e.kind in (EventKind.READ, EventKind.WRITE, EventKind.KERNEL_READ, EventKind.KERNEL_WRITE):
                assert 0 <= e.addr and e.addr + e.size <= 16


def test_random_kernel_ratio_zero_has_no_kernel_events():
    traces = gen_random(seed=2, events=2000, kernel_ratio=0.0)
    kinds = {e.kind for events in traces.threads.values() for e in events}
    assert EventKind.KERNEL_READ not in kinds
    assert EventKind.KERNEL_WRITE not in kinds


def test_example_events_follow_one_clock():
    merged = gen_example_2a().merged()
    assert [e.ts for e in merged] == list(range(1, 8))
    assert [e.tid for e in merged] == [1, 1, 2, 2, 2, 1, 1]


def test_producer_consumer_alternates():
    merged = gen_producer_consumer(3).merged()
    body = [(e.tid, e.kind) for e in merged][2:-2]
    assert body == [(1, EventKind.WRITE), (2, EventKind.READ)] * 3


def test_scaling_scenario_shape():
    traces = gen_scaling_scenario(4)
    reads = [e for e in traces.threads[1] if e.kind is EventKind.READ]
    # activations 1..4 read 1, 1+1, 2+1, 2+2 times
    assert len(reads) == 1 + 2 + 3 + 4
    assert traces.names[2] == 'r'


def test_registry_names():
    assert set(SCENARIOS) == {
        'example-2a', 'example-2b', 'producer-consumer', 'producer-consumer-split',
        'external-read', 'scaling', 'random',
    }
    assert get_scenario('nope') is None


def test_scenario_generate_ignores_foreign_params():
    traces = SCENARIOS['producer-consumer'].generate(n=4, seed=9, threads=None)
    assert sum(len(events) for events in traces.threads.values()) == 4 + 8
    random = SCENARIOS['random'].generate(n=100, seed=1, events=50, threads=2)
    assert set(random.threads) <= {1, 2}


def test_trace_set_written_and_reloaded(tmp_path):
    traces = SCENARIOS['producer-consumer-split'].generate(n=10)
    traces.write(tmp_path / "pc")
    paths = discover_trace_files(tmp_path / "pc")
    assert load_thread_traces(paths) == traces.threads
    assert load_names(tmp_path / "pc.names") == traces.names
