"""
trms-prof: command-line entry point

    trms-prof gen <scenario> [-n N] [--seed S] ... -o <base>
    trms-prof profile <trace-base> [--counter-width W] ... -o <profile.csv>
    trms-prof report <profile.csv> [--format csv|json|excel|parquet] -o <dir>

Exit codes: 0 ok, 1 usage/config error, 2 trace/shadow/IO error,
3 a requested check failed.
"""

import sys
from typing import List, Optional

import click

from trmsprof.config import OUTPUT_FORMATS, load_config
from trmsprof.errors import CheckFailed, ConfigError, ShadowError, TraceError
from trmsprof.main import (
    configure_logging,
    load_names_for,
    print_summary_statistics,
    run_gen_pipeline,
    run_profile_pipeline,
    run_report_pipeline,
)
from trmsprof.tracegen import SCENARIOS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TRACE = 2
EXIT_CHECK = 3


@click.group()
@click.option('--log-level', default=None, help="Overrides TRMS_LOG_LEVEL")
def cli(log_level: Optional[str]):
    """Thread-aware input-sensitive profiler over recorded traces"""
    configure_logging(log_level)


@cli.command('gen')
@click.argument('scenario', type=click.Choice(sorted(SCENARIOS)))
@click.option('-n', 'n', type=click.IntRange(min=0), default=100, show_default=True,
              help="Rounds / activations for parametric scenarios")
@click.option('--seed', type=int, default=None)
@click.option('--threads', type=click.IntRange(min=1), default=None)
@click.option('--cells', type=click.IntRange(min=1), default=None)
@click.option('--events', type=click.IntRange(min=0), default=None)
@click.option('--kernel-ratio', type=click.FloatRange(0.0, 1.0), default=None)
@click.option('-o', '--out', 'out_base', required=True, help="Trace base path")
def gen(scenario, n, seed, threads, cells, events, kernel_ratio, out_base):
    """Write the per-thread trace files of a synthetic scenario"""
    run_gen_pipeline(scenario, out_base, n=n, seed=seed, threads=threads, cells=cells,
                     events=events, kernel_ratio=kernel_ratio)


@cli.command('profile')
@click.argument('trace_base')
@click.option('--config', 'config_path', default='config.json', show_default=True)
@click.option('--counter-width', type=int, default=None)
@click.option('--renumber-margin', type=int, default=None)
@click.option('--granularity', type=int, default=None)
@click.option('--oracle-check/--no-oracle-check', default=None)
@click.option('--debug-invariants/--no-debug-invariants', default=None)
@click.option('--workers', type=int, default=None)
@click.option('-o', '--out', 'output_path', default=None, help="Profile CSV destination")
def profile(trace_base, config_path, counter_width, renumber_margin, granularity,
            oracle_check, debug_invariants, workers, output_path):
    """Replay <trace-base>.t<tid>.trace files and write the profile CSV"""
    config = load_config(config_path).override(
        counter_width=counter_width, renumber_margin=renumber_margin, granularity=granularity,
        oracle_check=oracle_check, debug_invariants=debug_invariants, workers=workers,
    )
    store, stats = run_profile_pipeline(trace_base, config, output_path)
    print_summary_statistics(store, stats, load_names_for(trace_base))


@cli.command('report')
@click.argument('profile_csv', type=click.Path(exists=True, dir_okay=False))
@click.option('--config', 'config_path', default='config.json', show_default=True)
@click.option('--format', 'output_format', type=click.Choice(OUTPUT_FORMATS), default=None)
@click.option('--merge-threads/--per-thread', default=None)
@click.option('--names', 'names_path', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('-o', '--out', 'output_dir', default=None, help="Report directory")
def report(profile_csv, config_path, output_format, merge_threads, names_path, output_dir):
    """Build worst-case/workload plots, metrics and fits from a profile CSV"""
    config = load_config(config_path).override(format=output_format, merge_threads=merge_threads)
    run_report_pipeline(profile_csv, config, output_dir or config.output_dir,
                        load_names_for(profile_csv, names_path))


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the CLI and map failures to exit codes

    Args:
        argv: Arguments without the program name (sys.argv[1:] when None)

    Returns:
        Process exit code
    """
    try:
        cli.main(args=argv, prog_name='trms-prof', standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        click.echo(f"[ERROR] {type(e).__name__}: {e}", err=True)
        return EXIT_USAGE
    except CheckFailed as e:
        click.echo("\n" + "=" * 80, err=True)
        click.echo("✗ CHECK FAILED", err=True)
        click.echo("=" * 80, err=True)
        click.echo(f"[ERROR] {type(e).__name__}: {e}", err=True)
        return EXIT_CHECK
    except (TraceError, ShadowError, OSError) as e:
        click.echo("\n" + "=" * 80, err=True)
        click.echo("✗ ERROR - PIPELINE FAILED", err=True)
        click.echo("=" * 80, err=True)
        click.echo(f"[ERROR] {type(e).__name__}: {e}", err=True)
        return EXIT_TRACE


if __name__ == "__main__":
    sys.exit(main())
