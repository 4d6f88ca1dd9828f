#!/usr/bin/env python3
"""
Main CLI entry point for chaplab.
Runs scenario files: integrates the selected model, evaluates the named
checks, and writes a trajectory table plus a JSON report.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from tqdm import tqdm

from chaplab.checks import list_checks
from chaplab.config import configure_logging, load_config
from chaplab.numerics import IntegrationError
from chaplab.reports import print_report_summary
from chaplab.runner import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, execute, run_scenario
from chaplab.scenarios import load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='chaplab',
        description='Numerical laboratory for the n-dimensional Chaplygin sphere and the Veselova problem',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Run a scenario and its checks
  python -m chaplab.cli_run run scenarios/homogeneous_ball.json

  # Compare two flows through a declared mapping
  python -m chaplab.cli_run compare scenarios/hamiltonization.json --out ./runs

  # Override the seed used for random initial data
  python -m chaplab.cli_run run scenarios/conservation_n4.json --seed 7

  # List the available checks
  python -m chaplab.cli_run checks --list

  # Run several scenarios in parallel
  python -m chaplab.cli_run batch scenarios/*.json

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error.
        """
    )
    subparsers = parser.add_subparsers(dest='command')

    for name, help_text in (('run', 'Run a scenario and its checks'),
                            ('compare', 'Run a scenario with a compare block')):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument('scenario', help='Path to a scenario JSON file')
        _add_common(sub)

    checks = subparsers.add_parser('checks', help='Show available checks')
    checks.add_argument('--list', action='store_true', help='List checks with their models')

    batch = subparsers.add_parser('batch', help='Run independent scenarios concurrently')
    batch.add_argument('scenarios', nargs='+', help='Scenario JSON files')
    batch.add_argument('--workers', type=int, default=None,
                       help='Parallel workers (default: CHAPLAB_MAX_WORKERS)')
    _add_common(batch)
    return parser


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument('--seed', type=int, default=None, help='Seed for random initial data')
    sub.add_argument('--out', default=None, help='Output directory (default: CHAPLAB_OUTPUT_DIR)')
    sub.add_argument('--quiet', action='store_true', help='Suppress banners and progress bars')


def print_checks() -> None:
    """Display the check registry."""
    print("\n" + "="*70)
    print("Available Checks")
    print("="*70 + "\n")
    for check in list_checks():
        name = f"{check.name}:<name>" if check.needs_argument else check.name
        print(f"  {name}")
        print(f"      {check.description}")
        print(f"      default tolerance {check.default_tolerance:.0e}; models: {', '.join(check.models)}")
    print("="*70)


def _banner(title: str, quiet: bool) -> None:
    if not quiet:
        print("\n" + "="*70)
        print(title)
        print("="*70)


def cmd_run(args, config, require_compare: bool = False) -> int:
    """Run one scenario and return the exit code."""
    quiet = args.quiet
    _banner("Step 1: Loading scenario", quiet)
    scenario = load_scenario(args.scenario)
    if not quiet:
        print(f"\nScenario: {scenario.name}")
        print(f"Model: {scenario.model}")
        if scenario.description:
            print(f"Description: {scenario.description}")
        print(f"Checks: {len(scenario.checks)}"
              + (f" + comparison '{scenario.compare.mapping}'" if scenario.compare else ""))

    _banner("Step 2: Integrating and checking", quiet)
    report, report_path = run_scenario(scenario, config, out_dir=args.out, seed=args.seed,
                                       progress=not quiet, require_compare=require_compare)

    if not quiet:
        print_report_summary(report)
        print(f"\nReport: {report_path}")
        if 'trajectory' in report.metadata:
            print(f"Trajectory: {report.metadata['trajectory']}")
    return EXIT_OK if report.overall_pass else EXIT_FAILED


def cmd_batch(args, config) -> int:
    """Run scenarios in worker processes; the exit code is the worst one seen."""
    workers = args.workers or config['max_workers']
    paths = [str(Path(path)) for path in args.scenarios]
    _banner(f"Batch: {len(paths)} scenarios on {workers} workers", args.quiet)

    results = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(execute, path, args.out, args.seed) for path in paths]
        for future in tqdm(as_completed(futures), total=len(futures), desc="Scenarios",
                           unit="scenario", disable=args.quiet):
            results.append(future.result())

    worst = EXIT_OK
    labels = {EXIT_OK: 'PASS', EXIT_FAILED: 'FAIL', EXIT_CONFIG: 'ERROR'}
    for path, code, message in sorted(results):
        worst = max(worst, code)
        if not args.quiet or code != EXIT_OK:
            print(f"  [{labels[code]}] {path}: {message}")
    return worst


def main(argv=None) -> int:
    """Main CLI workflow."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG

    if args.command == 'checks':
        print_checks()
        return EXIT_OK

    try:
        config = load_config()
        configure_logging(config['log_level'])
        if args.command == 'batch':
            return cmd_batch(args, config)
        return cmd_run(args, config, require_compare=(args.command == 'compare'))

    except ValueError as e:
        print(f"\nConfiguration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    except OSError as e:
        print(f"\nCannot write output: {e}", file=sys.stderr)
        return EXIT_CONFIG

    except IntegrationError as e:
        print(f"\nIntegration failed: {e}", file=sys.stderr)
        return EXIT_FAILED

    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user.")
        return EXIT_FAILED

    except Exception as e:
        print(f"\nUnexpected error: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
