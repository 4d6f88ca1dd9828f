"""
Check reports and trajectory tables.

Reports are JSON files whose 'checks' block depends only on the
scenario; timestamps and versions live in a separate 'metadata' block.
Trajectories are comma-separated tables with 17 significant digits.
"""

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from chaplab.numerics import Trajectory


@dataclass
class CheckResult:
    """Outcome of one named check."""

    name: str
    value: float
    tolerance: float
    details: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return math.isfinite(self.value) and self.value <= self.tolerance

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'value': _jsonable(self.value),
            'tolerance': self.tolerance,
            'pass': _jsonable(self.passed),
            'details': _jsonable(self.details),
        }


@dataclass
class CheckReport:
    """All check results of one scenario run."""

    scenario: str
    checks: List[CheckResult] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)

    @property
    def overall_pass(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def to_dict(self) -> Dict:
        return {
            'scenario': self.scenario,
            'overall_pass': self.overall_pass,
            'checks': [check.to_dict() for check in self.checks],
            'metadata': _jsonable(self.metadata),
        }


def _jsonable(value):
    """Convert numpy scalars/arrays and non-finite floats for json.dump."""
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_report(report: CheckReport, out_dir: str) -> Path:
    """
    Save a report as <scenario>_report.json.

    Args:
        report: CheckReport
        out_dir: Output directory (created if missing)

    Returns:
        Path of the written file
    """
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    data = report.to_dict()
    data['metadata'] = dict(data['metadata'], timestamp=datetime.now().isoformat())
    report_file = directory / f"{report.scenario}_report.json"
    with open(report_file, 'w') as f:
        json.dump(data, f, indent=2)
    return report_file


def load_report(path: str) -> Dict:
    with open(path, 'r') as f:
        return json.load(f)


def write_trajectory(traj: Trajectory, columns: List[str], path: str,
                     extra: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """
    Write a trajectory table: t, tau (when present), state columns, extra columns.

    Args:
        traj: Trajectory
        columns: Names of the state components
        path: Output file
        extra: Additional per-sample columns (invariants)

    Returns:
        Path of the written file

    Raises:
        ValueError: If column names do not match the state width
    """
    if len(columns) != traj.states.shape[1]:
        raise ValueError(f"Expected {traj.states.shape[1]} column names, got {len(columns)}")
    header = ['t']
    blocks = [traj.times[:, None]]
    if traj.tau is not None:
        header.append('tau')
        blocks.append(traj.tau[:, None])
    header.extend(columns)
    blocks.append(traj.states)
    for name, values in (extra or {}).items():
        header.append(name)
        blocks.append(np.asarray(values, dtype=float)[:, None])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.hstack(blocks), fmt='%.17g', delimiter=',', header=','.join(header), comments='')
    return path


def read_trajectory(path: str) -> Dict[str, np.ndarray]:
    """Read a table written by write_trajectory into {column: values}."""
    with open(path, 'r') as f:
        header = f.readline().strip().split(',')
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def print_report_summary(report: CheckReport) -> None:
    """Print a per-check summary block."""
    print("\n" + "="*70)
    print(f"Check Report: {report.scenario}")
    print("="*70 + "\n")
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"  [{status}] {check.name}: {check.value:.3e} (tolerance {check.tolerance:.1e})")
    passed = sum(1 for check in report.checks if check.passed)
    print(f"\nPassed: {passed}/{len(report.checks)}")
    print(f"Overall: {'PASS' if report.overall_pass else 'FAIL'}")
    print("="*70)
