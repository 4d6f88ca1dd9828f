"""
Scenario files.

A scenario is a JSON document naming a model, its parameters, the
initial state (explicit vectors or a seed), integrator settings, the
checks to run and, for comparisons, the mapping to a second flow.
Unknown keys are rejected at every level.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from chaplab.models import MODEL_NAMES
from chaplab.numerics import IntegratorConfig


logger = logging.getLogger(__name__)

TOP_KEYS = {'name', 'description', 'model', 'parameters', 'initial', 'integrator', 'checks', 'output', 'compare'}
PARAMETER_KEYS = {'n', 'a', 'D', 's', 'inertia'}
INITIAL_KEYS = {'gamma', 'p', 'p_tilde', 'k', 'w', 'x', 'v', 'seed', 'p_scale', 'on_constraint'}
INTEGRATOR_KEYS = {'method', 'step', 't_end', 'tolerance', 'projection', 'stride'}
CHECK_KEYS = {'name', 'tolerance', 'options'}
OUTPUT_KEYS = {'dir', 'trajectory'}
COMPARE_KEYS = {'mapping', 'tolerance', 'integrator', 'options'}

# option name -> expected type; other option names pass through unchecked
OPTION_TYPES = {
    'points': int, 'stride': int,
    'margin': float, 'step': float, 'rho': float, 't_end': float, 'tau': float, 'section': 'index',
    'strict': bool, 'pairs': list,
}

# mapping -> (first model, second model); None means "same as first"
MAPPINGS = {
    'reparametrize': ('chaplygin_cotangent', 'geodesic_tilde'),
    'embed': ('chaplygin_cotangent', 'chaplygin_full'),
    'foliation': ('chaplygin_cotangent', 'veselova_reduced'),
    'gauss': ('veselova_reduced', 'ellipsoid'),
    'fedorov': ('veselova3d', 'classical3d'),
    'identity': (None, None),
}


class ScenarioError(ValueError):
    """Raised when a scenario file is unreadable or invalid."""


@dataclass
class CheckSpec:
    """A named check with its tolerance and options."""

    name: str
    tolerance: float
    options: Dict = field(default_factory=dict)


@dataclass
class CompareSpec:
    """Mapping to a second flow and the tolerance on the discrepancy."""

    mapping: str
    tolerance: float
    integrator: Dict = field(default_factory=dict)
    options: Dict = field(default_factory=dict)

    @property
    def second_model(self) -> Optional[str]:
        return MAPPINGS[self.mapping][1]


@dataclass
class ScenarioConfig:
    """Validated scenario."""

    name: str
    model: str
    parameters: Dict
    initial: Dict = field(default_factory=dict)
    integrator: Dict = field(default_factory=dict)
    checks: List[CheckSpec] = field(default_factory=list)
    output: Dict = field(default_factory=dict)
    compare: Optional[CompareSpec] = None
    description: str = ''
    source: Optional[str] = None

    def integrator_config(self, defaults: Dict, overrides: Optional[Dict] = None) -> IntegratorConfig:
        """
        Merge scenario integrator settings over the configured defaults.

        Raises:
            ScenarioError: If the merged settings are invalid
        """
        settings = {
            'method': defaults.get('default_method', 'rk4'),
            'step': defaults.get('default_step', 1e-3),
            't_end': defaults.get('default_t_end', 10.0),
            'tolerance': defaults.get('rkf45_tolerance', 1e-10),
        }
        settings.update(self.integrator)
        settings.update(overrides or {})
        try:
            return IntegratorConfig(**settings)
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"Invalid integrator settings in scenario '{self.name}': {e}")

    def seed(self, fallback: int) -> int:
        return int(self.initial.get('seed', fallback))


def _check_keys(block, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ScenarioError(f"'{where}' must be an object, got {type(block).__name__}")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ScenarioError(
            f"Unknown keys in '{where}': {', '.join(unknown)} (allowed: {', '.join(sorted(allowed))})"
        )


def _check_options(options, where: str) -> Dict:
    _check_keys(options, set(options) if isinstance(options, dict) else set(), where)
    for key, value in options.items():
        kind = OPTION_TYPES.get(key)
        if kind is None:
            continue
        label = f"{where}.{key}"
        if kind is bool:
            if not isinstance(value, bool):
                raise ScenarioError(f"'{label}' must be true or false, got {value!r}")
        elif kind is list:
            if not isinstance(value, list) or not all(isinstance(pair, list) and len(pair) == 2 for pair in value):
                raise ScenarioError(f"'{label}' must be a list of index pairs, got {value!r}")
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"'{label}' must be a number, got {value!r}")
        elif kind == 'index' and (not float(value).is_integer() or value < 0):
            raise ScenarioError(f"'{label}' must be a state index, got {value!r}")
        elif kind is int and (not float(value).is_integer() or value < 1):
            raise ScenarioError(f"'{label}' must be a positive integer, got {value!r}")
        elif kind is float and not value > 0:
            raise ScenarioError(f"'{label}' must be positive, got {value!r}")
    return options


def _positive(value, where: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"'{where}' must be a number, got {value!r}")
    if not number > 0:
        raise ScenarioError(f"'{where}' must be positive, got {value!r}")
    return number


def _parse_checks(raw) -> List[CheckSpec]:
    if not isinstance(raw, list):
        raise ScenarioError("'checks' must be a list")
    checks = []
    for i, entry in enumerate(raw):
        where = f"checks[{i}]"
        _check_keys(entry, CHECK_KEYS, where)
        if not entry.get('name'):
            raise ScenarioError(f"'{where}' needs a name")
        options = _check_options(entry.get('options', {}), f"{where}.options")
        checks.append(CheckSpec(entry['name'], _positive(entry.get('tolerance'), f"{where}.tolerance"), options))
    return checks


def _parse_compare(raw, model: str) -> CompareSpec:
    _check_keys(raw, COMPARE_KEYS, 'compare')
    mapping = raw.get('mapping')
    if mapping not in MAPPINGS:
        raise ScenarioError(f"Unknown mapping '{mapping}', expected one of {', '.join(MAPPINGS)}")
    first = MAPPINGS[mapping][0]
    if first is not None and first != model:
        raise ScenarioError(f"Mapping '{mapping}' starts from model '{first}', scenario uses '{model}'")
    integrator = raw.get('integrator', {})
    _check_keys(integrator, INTEGRATOR_KEYS, 'compare.integrator')
    return CompareSpec(mapping, _positive(raw.get('tolerance'), 'compare.tolerance'), integrator,
                       _check_options(raw.get('options', {}), 'compare.options'))


def parse_scenario(data: Dict, source: Optional[str] = None) -> ScenarioConfig:
    """
    Validate a scenario document.

    Args:
        data: Parsed JSON
        source: File path for messages

    Returns:
        ScenarioConfig

    Raises:
        ScenarioError: On unknown keys, missing fields or malformed values
    """
    _check_keys(data, TOP_KEYS, 'scenario')
    name = data.get('name')
    if not name or not isinstance(name, str):
        raise ScenarioError("Scenario needs a non-empty 'name'")
    if any(ch in name for ch in '/\\'):
        raise ScenarioError(f"Scenario name must not contain path separators: {name!r}")
    model = data.get('model')
    if model not in MODEL_NAMES:
        raise ScenarioError(f"Unknown model '{model}', expected one of {', '.join(MODEL_NAMES)}")

    parameters = data.get('parameters', {})
    _check_keys(parameters, PARAMETER_KEYS, 'parameters')
    initial = data.get('initial', {})
    _check_keys(initial, INITIAL_KEYS, 'initial')
    integrator = data.get('integrator', {})
    _check_keys(integrator, INTEGRATOR_KEYS, 'integrator')
    output = data.get('output', {})
    _check_keys(output, OUTPUT_KEYS, 'output')
    if 'seed' in initial and (not isinstance(initial['seed'], int) or initial['seed'] < 0):
        raise ScenarioError(f"'initial.seed' must be a non-negative integer, got {initial['seed']!r}")

    compare = _parse_compare(data['compare'], model) if 'compare' in data else None
    checks = _parse_checks(data.get('checks', []))
    if not checks and compare is None:
        raise ScenarioError(f"Scenario '{name}' has no checks and no comparison")

    return ScenarioConfig(
        name=name, model=model, parameters=parameters, initial=initial, integrator=integrator,
        checks=checks, output=output, compare=compare, description=data.get('description', ''),
        source=source,
    )


def load_scenario(path: str) -> ScenarioConfig:
    """
    Load and validate a scenario file.

    Raises:
        ScenarioError: If the file is missing, not JSON, or invalid
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"Scenario file not found: {path}")
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"Scenario file {path} is not valid JSON: {e}")
    logger.debug("Loaded scenario file %s", path)
    return parse_scenario(data, source=str(path))


def save_scenario(data: Dict, path: str) -> None:
    """Write a scenario document after validating it."""
    parse_scenario(data)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2)
