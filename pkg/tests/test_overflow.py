"""
Tests for timestamp renumbering
"""

import math

import numpy as np
import pytest

from conftest import profile
from trmsprof.config import Config
from trmsprof.errors import ReplayError, RenumberInsufficient
from trmsprof.overflow import active_timestamps, maybe_renumber, renumber
from trmsprof.profiler import ProfilerSession, ShadowStackFrame
from trmsprof.trace_model import TraceEvent, merge
from trmsprof.tracegen import gen_random, gen_scaling_scenario

SMALL_GEOMETRY = dict(primary_size=4, secondary_size=4, chunk_size=8)


def make_session(width=32, **kwargs):
    return ProfilerSession(Config(counter_width=width, **SMALL_GEOMETRY, **kwargs))


def push_frame(session, tid, ts, rtn=1):
    if tid not in session.threads:
        session.cost_counters[tid] = 0
        session.add_thread(tid)
    thread = session.threads[tid]
    thread.stack.append(ShadowStackFrame(rtn, ts, 0))
    thread.stamps.append(ts)


def truth_table(session, cells):
    """Every comparison the read handler can make, keyed by (tid, cell, frame index)"""
    table = {}
    wts = session.global_shadow.wts
    for tid, thread in session.threads.items():
        for cell in cells:
            ts = thread.ts_table.get(cell)
            w = wts.get(cell)
            table[(tid, cell, None)] = (ts < w, ts == w)
            for other_tid, other in session.threads.items():
                for i, frame_ts in enumerate(other.stamps):
                    table[(tid, cell, (other_tid, i))] = (ts < frame_ts, frame_ts <= ts)
    return table


# ============================================================================
# RENUMBER
# ============================================================================

def test_single_frame_example():
    session = make_session()
    push_frame(session, 1, 900)
    session.threads[1].ts_table.set(7, 950)
    session.global_shadow.record_write(7, 920, writer=2)
    session.count = 1000

    renumber(session)

    assert session.threads[1].stamps == [3]
    assert session.threads[1].stack[0].ts == 3
    assert session.global_shadow.get(7) == 4
    assert session.threads[1].ts_table.get(7) == 5
    assert session.count == 6
    assert session.global_shadow.writer(7) == 2


def test_empty_state_renumbers_to_three():
    session = make_session()
    session.count = 12345
    renumber(session)
    assert session.count == 3
    assert session.renumber_count == 1


def test_untouched_cells_stay_zero():
    session = make_session()
    push_frame(session, 1, 50)
    session.threads[1].ts_table.set(0, 60)
    renumber(session)
    table = session.threads[1].ts_table
    assert table.get(0) == 3
    assert table.get(1) == 0
    assert session.global_shadow.get(0) == 0


def random_snapshot(rng, count=10**6):
    session = make_session()
    threads = int(rng.integers(1, 5))
    frames = int(rng.integers(0, 17))
    stamps = sorted(int(s) for s in rng.choice(np.arange(1, count), size=frames, replace=False))
    owners = rng.integers(1, threads + 1, size=frames)
    for tid in range(1, threads + 1):
        session.cost_counters[tid] = 0
        session.add_thread(tid)
    for ts, tid in zip(stamps, owners):
        push_frame(session, int(tid), ts)

    cells = int(rng.integers(1, 33))
    # draw timestamps from near the frame stamps too, so boundary cases occur
    pool = np.concatenate([np.arange(0, count, 997), np.asarray(stamps, dtype=np.int64),
                           np.asarray(stamps, dtype=np.int64) + 1, [0, 0, 0]])
    for cell in range(cells):
        w = int(rng.choice(pool))
        if w:
            session.global_shadow.record_write(cell, w, writer=int(rng.integers(1, threads + 1)))
        for tid in range(1, threads + 1):
            v = int(rng.choice(np.concatenate([pool, [w, w, w + 1]])))
            if v:
                session.threads[tid].ts_table.set(cell, v)
    session.count = count
    return session


@pytest.mark.parametrize("seed", range(200))
def test_renumber_preserves_handler_comparisons(seed):
    session = random_snapshot(np.random.default_rng(seed))
    cells = range(32)
    before = truth_table(session, cells)

    renumber(session)

    assert truth_table(session, cells) == before
    all_stamps = active_timestamps(session)
    assert all_stamps == [3 * p for p in range(1, len(all_stamps) + 1)]
    assert session.count == 3 * len(all_stamps) + 3
    for _, w in session.global_shadow.wts.iterate_nonzero():
        assert w % 3 == 1
    for thread in session.threads.values():
        for _, v in thread.ts_table.iterate_nonzero():
            assert v < session.count


@pytest.mark.parametrize("seed", range(5))
def test_renumber_cost_is_log_active_per_location(seed, monkeypatch):
    session = random_snapshot(np.random.default_rng(seed))
    rho = len(active_timestamps(session))
    tau = len(session.threads)
    keys = {key for key, _ in session.global_shadow.wts.iter_chunks()}
    for thread in session.threads.values():
        keys |= {key for key, _ in thread.ts_table.iter_chunks()}
    locations = len(keys) * SMALL_GEOMETRY['chunk_size']

    searches = []
    searchsorted = np.searchsorted

    def counting(a, v, *args, **kwargs):
        searches.append((len(a), np.size(v)))
        return searchsorted(a, v, *args, **kwargs)

    monkeypatch.setattr(np, 'searchsorted', counting)
    renumber(session)

    # every lookup is one binary search over the rho active stamps
    assert all(length == rho for length, _ in searches)
    per_search = max(1, math.ceil(math.log2(rho + 1)))
    comparisons = sum(n for _, n in searches) * per_search
    assert comparisons <= (2 * tau + 1) * per_search * locations


# ============================================================================
# TRIGGER POLICY
# ============================================================================

def test_maybe_renumber_threshold():
    session = make_session(width=8)
    session.count = 250
    assert maybe_renumber(session, margin=4) is False
    session.count = 251
    assert maybe_renumber(session, margin=4) is True
    assert session.count == 3


def test_too_many_pending_frames():
    session = make_session(width=8)
    for i in range(90):
        push_frame(session, 1, i + 1)
    session.count = 251
    with pytest.raises(RenumberInsufficient) as info:
        maybe_renumber(session, margin=4)
    assert info.value.pending == 90
    # untouched on failure
    assert session.threads[1].stamps[-1] == 90


def test_deep_trace_on_narrow_counter_fails_cleanly():
    events = [TraceEvent.call(1, i + 1, 1) for i in range(100)]
    with pytest.raises(ReplayError) as info:
        profile_session = ProfilerSession(Config(counter_width=8))
        profile_session.replay(merge({1: events}))
    assert isinstance(info.value.cause, RenumberInsufficient)


def test_wide_counter_never_renumbers():
    session = ProfilerSession(Config(counter_width=64))
    session.replay(gen_random(seed=1, threads=4, events=3000).merged())
    assert session.renumber_count == 0


# ============================================================================
# PROFILE EQUIVALENCE
# ============================================================================

@pytest.mark.parametrize("seed", range(8))
def test_narrow_counter_gives_identical_profile(seed):
    traces = gen_random(seed=seed, threads=2 + seed % 7, cells=64, events=20_000,
                        kernel_ratio=(0.0, 0.1, 0.3)[seed % 3])
    narrow = ProfilerSession(Config(counter_width=10))
    narrow.replay(traces.merged())
    narrow_store = narrow.finish()

    assert narrow.renumber_count >= 10
    assert narrow_store.to_csv() == profile(traces, Config(counter_width=64)).to_csv()


def test_scaling_scenario_survives_renumbering():
    traces = gen_scaling_scenario(100)
    narrow = ProfilerSession(Config(counter_width=8))
    narrow.replay(traces.merged())
    assert narrow.renumber_count > 0
    assert narrow.finish() == profile(traces)
