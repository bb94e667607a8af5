"""
Shared fixtures for the trmsprof test suite
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pathlib import Path

import pytest

from trmsprof.config import Config
from trmsprof.profiler import run
from trmsprof.trace_model import discover_trace_files, load_thread_traces, merge

EXAMPLES_DIR = Path(__file__).parent / "examples"


@pytest.fixture
def examples_dir() -> Path:
    return EXAMPLES_DIR


@pytest.fixture
def wide_config() -> Config:
    """64-bit counters: renumbering never triggers"""
    return Config(counter_width=64)


def load_golden(name: str):
    """Merged trace of the golden example `tests/examples/<name>.t*.trace`"""
    return merge(load_thread_traces(discover_trace_files(EXAMPLES_DIR / name)))


def by_routine(store):
    """rtn -> the single tuple of that routine (fails on repeated routines)"""
    result = {}
    for t in store:
        assert t.rtn not in result, f"routine {t.rtn} activated more than once"
        result[t.rtn] = t
    return result


def profile(trace_set, config=None):
    return run(trace_set.merged(), config)
