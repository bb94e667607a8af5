"""
TRMS Profiler Pipeline - Main Orchestration

Generates synthetic traces, replays per-thread trace files through the
shadow-stack profiler, and turns the resulting profile tuples into report
datasets (worst-case/workload plots, richness, induced breakdown, fits).
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import click
import pandas as pd
from dotenv import load_dotenv

from trmsprof.config import Config, log_level
from trmsprof.metrics import build_report, emit, induced_breakdown, input_volume, routine_name
from trmsprof.oracle import check_against_oracle
from trmsprof.profiler import ProfilerSession
from trmsprof.store import ROOT_ROUTINE, ProfileStore
from trmsprof.trace_model import (
    discover_trace_files,
    iter_merged,
    load_names,
    load_thread_traces,
    merge,
    stream_thread_trace,
)
from trmsprof.tracegen import TraceSet, get_scenario

log = logging.getLogger(__name__)


# ============================================================================
# LOGGING
# ============================================================================

class _TagFilter(logging.Filter):
    """Adds record.tag, the upper-cased last component of the logger name"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.tag = record.name.rsplit('.', 1)[-1].upper()
        return True


def configure_logging(level: Optional[str] = None) -> None:
    """
    Route trmsprof loggers to stderr as `[TAG] message`

    Args:
        level: Log level name; defaults to TRMS_LOG_LEVEL (from the
            environment or a .env file), then INFO
    """
    load_dotenv()
    logger = logging.getLogger('trmsprof')
    logger.setLevel(level.upper() if level else log_level())
    if not any(getattr(h, '_trmsprof', False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("[%(tag)s] %(message)s"))
        handler.addFilter(_TagFilter())
        handler._trmsprof = True
        logger.addHandler(handler)
    logger.propagate = False


def _banner(title: str) -> None:
    click.echo("\n" + "=" * 80)
    click.echo(title)
    click.echo("=" * 80)


def _step(k: int, n: int, title: str) -> None:
    click.echo(f"\n[STEP {k}/{n}] {title}")
    click.echo("-" * 80)


# ============================================================================
# PIPELINES
# ============================================================================

def run_gen_pipeline(scenario_name: str, out_base: Union[str, Path], **params) -> TraceSet:
    """
    Generate a scenario's traces and write them under `out_base`

    Raises:
        click.UsageError: unknown scenario
    """
    scenario = get_scenario(scenario_name)
    if scenario is None:
        raise click.UsageError(f"unknown scenario {scenario_name!r}")
    traces = scenario.generate(**params)
    traces.write(out_base)
    click.echo(f"[GEN] ✓ {scenario.name}: {traces.event_count:,} events on "
               f"{len(traces.threads)} thread(s) -> {out_base}")
    return traces


def run_profile_pipeline(trace_base: Union[str, Path], config: Config,
                         output_path: Union[str, Path, None] = None) -> Tuple[ProfileStore, Dict[str, int]]:
    """
    Main orchestration function for profiling a trace

    Pipeline steps:
    1. Discover per-thread trace files
    2. Parse and merge them (streamed unless the oracle needs a second pass)
    3. Replay through the profiler
    4. [Optional] Replay through the naive oracle and compare
    5. Save the profile CSV

    Args:
        trace_base: Trace base path (`<base>.t<tid>.trace` files)
        config: Validated configuration
        output_path: Profile CSV destination (not written when None)

    Returns:
        (ProfileStore, session statistics)

    Raises:
        FileNotFoundError: no trace files match the base path
    """
    _banner("TRMS PROFILER - STARTING")
    start_time = datetime.now()

    _step(1, 5, "DISCOVER TRACE FILES")
    paths = discover_trace_files(trace_base)
    if not paths:
        raise FileNotFoundError(f"no trace files matching {trace_base}.t<tid>.trace")
    click.echo(f"[TRACE] Found {len(paths)} thread file(s): {', '.join(p.name for p in paths.values())}")

    _step(2, 5, "PARSE & MERGE")
    if config.oracle_check or config.workers > 1:
        events = merge(load_thread_traces(paths, config.workers))
        click.echo(f"[TRACE] ✓ Merged {len(events):,} events")
    else:
        events = iter_merged({tid: stream_thread_trace(path, tid) for tid, path in paths.items()})
        click.echo("[TRACE] Streaming merge (single pass)")

    _step(3, 5, "PROFILE")
    session = ProfilerSession(config)
    session.replay(events)
    store = session.finish()
    stats = session.stats()
    click.echo(f"[PROFILE] ✓ {stats['events']:,} events, {len(store):,} tuples, "
               f"{stats['renumberings']} renumbering(s)")
    if config.debug_invariants:
        click.echo("[PROFILE] ✓ Shadow stack sums matched the naive oracle after every event")

    _step(4, 5, "ORACLE CHECK")
    if config.oracle_check:
        check_against_oracle(store, events, config.granularity)
        click.echo(f"[ORACLE] ✓ All {len(store):,} tuples match")
    else:
        click.echo("[ORACLE] Oracle check disabled")

    _step(5, 5, "SAVE")
    if output_path is not None:
        save_results(store, output_path)
    else:
        click.echo("[OUTPUT] No output path given, profile not saved")

    duration = (datetime.now() - start_time).total_seconds()
    _banner("PROFILING COMPLETE")
    click.echo(f"[SUMMARY] Execution time: {duration:.2f} seconds")
    if duration > 0:
        click.echo(f"[SUMMARY] Events per second: {stats['events'] / duration:,.0f}")
    return store, stats


def run_report_pipeline(profile_csv: Union[str, Path], config: Config,
                        output_dir: Union[str, Path],
                        names: Optional[Mapping[int, str]] = None) -> Dict[str, pd.DataFrame]:
    """
    Build and write every report dataset from a profile CSV

    Returns:
        Report datasets keyed by name
    """
    _banner("TRMS REPORT - STARTING")

    _step(1, 3, "LOAD PROFILE")
    store = ProfileStore.from_csv(profile_csv)
    click.echo(f"[REPORT] Loaded {len(store):,} tuples from {profile_csv}")

    _step(2, 3, "BUILD DATASETS")
    datasets = build_report(store, config.merge_threads, names, config.fit_models)
    for name, frame in datasets.items():
        click.echo(f"  {name:15} {len(frame):8,} rows")

    _step(3, 3, "EMIT")
    emit(datasets, config.format, output_dir)
    click.echo(f"[OUTPUT] ✓ Report written to {output_dir} ({config.format})")
    return datasets


def load_names_for(trace_or_csv: Union[str, Path], names_path: Union[str, Path, None] = None) -> Dict[int, str]:
    """Routine names from an explicit sidecar, or `<base>.names` next to the input"""
    if names_path is not None:
        return load_names(names_path)
    path = Path(trace_or_csv)
    return load_names(path.with_suffix('.names'))


# ============================================================================
# OUTPUT MANAGEMENT
# ============================================================================

def save_results(store: ProfileStore, output_path: Union[str, Path]) -> None:
    """
    Save the profile tuples as CSV

    Args:
        store: Profile tuples
        output_path: Output file path
    """
    click.echo(f"\n[OUTPUT] Saving profile to {output_path}...")
    store.to_csv(output_path)
    file_size = Path(output_path).stat().st_size / 1024 / 1024
    click.echo(f"[OUTPUT] ✓ Saved {len(store):,} rows ({file_size:.2f} MB)")


def print_summary_statistics(store: ProfileStore, stats: Optional[Dict[str, int]] = None,
                             names: Optional[Mapping[int, str]] = None) -> None:
    """
    Print summary statistics about a profile

    Args:
        store: Profile tuples
        stats: Session statistics from the profiler
        names: Routine id -> name
    """
    names = names or {}
    _banner("PROFILE SUMMARY STATISTICS")

    frame = store.to_frame()
    routines = frame.loc[frame['rtn'] != ROOT_ROUTINE, 'rtn'].nunique()
    click.echo(f"\n[METRICS] Total Tuples: {len(store):,}")
    click.echo(f"[METRICS] Routines: {routines:,}")
    click.echo(f"[METRICS] Truncated Activations: {int(frame['truncated'].sum()):,}")
    click.echo(f"[METRICS] Input Volume: {input_volume(store):.4f}")
    thread_pct, external_pct = induced_breakdown(store)
    click.echo(f"[METRICS] Induced First-Accesses: {thread_pct:5.1f}% thread, {external_pct:5.1f}% external")
    if stats:
        click.echo(f"[METRICS] Renumberings: {stats['renumberings']:,}")
        click.echo(f"[METRICS] Max Stack Depth: {stats['max_depth']:,}")
        click.echo(f"[METRICS] Shadow Chunks: {stats['shadow_chunks']:,}")

    if frame.empty:
        return
    click.echo("\n[BREAKDOWN] By Routine:")
    per_routine = frame.groupby('rtn').agg(
        activations=('rtn', 'size'), trms=('trms', 'sum'), rms=('rms', 'sum'),
        distinct_trms=('trms', 'nunique'), distinct_rms=('rms', 'nunique'),
    )
    for rtn, row in per_routine.iterrows():
        name = routine_name(rtn, names)
        click.echo(f"  {name:25} {row['activations']:8,} activations  "
                   f"TRMS {row['trms']:8,} ({row['distinct_trms']:,} sizes)  "
                   f"RMS {row['rms']:8,} ({row['distinct_rms']:,} sizes)")
