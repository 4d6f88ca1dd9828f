"""
Configuration management for chaplab.

Defaults come from config.json at the project root; a .env file and the
environment override them. Values are validated before use.
"""

import json
import logging
import os
from pathlib import Path
from dotenv import load_dotenv

from chaplab.numerics import METHODS


PROJECT_ROOT = Path(__file__).parent.parent
DEFAULTS_FILE = PROJECT_ROOT / 'config.json'

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

BUILTIN_DEFAULTS = {
    'output_dir': './chaplab_runs',
    'default_step': 1e-3,
    'default_t_end': 10.0,
    'default_method': 'rk4',
    'rkf45_tolerance': 1e-10,
    'max_workers': 4,
    'log_level': 'WARNING',
    'default_seed': 0,
}


def load_defaults(path: Path = DEFAULTS_FILE) -> dict:
    """
    Read default settings from config.json, falling back to built-in values.

    Unknown keys in the file are ignored; a corrupted file is reported
    and skipped.
    """
    defaults = dict(BUILTIN_DEFAULTS)
    if not path.exists():
        return defaults
    try:
        with open(path, 'r') as f:
            stored = json.load(f)
    except json.JSONDecodeError:
        print(f"Warning: {path} is corrupted. Using built-in defaults.")
        return defaults
    defaults.update({key: value for key, value in stored.items() if key in defaults})
    return defaults


def load_config():
    """
    Load configuration from config.json, .env and the environment.

    Returns:
        dict: Configuration dictionary with the following keys:
            - output_dir: Where run outputs go (default: ./chaplab_runs)
            - default_step: Integrator step (default: 1e-3)
            - default_t_end: Integration horizon (default: 10.0)
            - default_method: rk4 or rkf45 (default: rk4)
            - rkf45_tolerance: Adaptive tolerance (default: 1e-10)
            - max_workers: Parallel scenarios in batch mode (default: 4)
            - log_level: Logging level name (default: WARNING)
            - default_seed: Seed for random initial data (default: 0)

    Raises:
        ValueError: If a value is malformed or out of range
    """
    # Load .env file from project root
    load_dotenv(PROJECT_ROOT / '.env')
    defaults = load_defaults()

    try:
        config = {
            'output_dir': os.getenv('CHAPLAB_OUTPUT_DIR', defaults['output_dir']),
            'default_step': float(os.getenv('CHAPLAB_DEFAULT_STEP', defaults['default_step'])),
            'default_t_end': float(os.getenv('CHAPLAB_DEFAULT_T_END', defaults['default_t_end'])),
            'default_method': os.getenv('CHAPLAB_DEFAULT_METHOD', defaults['default_method']),
            'rkf45_tolerance': float(os.getenv('CHAPLAB_RKF45_TOLERANCE', defaults['rkf45_tolerance'])),
            'max_workers': int(os.getenv('CHAPLAB_MAX_WORKERS', defaults['max_workers'])),
            'log_level': os.getenv('CHAPLAB_LOG_LEVEL', defaults['log_level']).upper(),
            'default_seed': int(os.getenv('CHAPLAB_DEFAULT_SEED', defaults['default_seed'])),
        }
    except (TypeError, ValueError) as e:
        raise ValueError(f"Malformed numeric setting in configuration: {e}")

    validate_config(config)
    return config


def validate_config(config):
    """
    Validate configuration values.

    Args:
        config: Configuration dictionary

    Raises:
        ValueError: If fields are missing or invalid
    """
    if not config.get('output_dir'):
        raise ValueError("CHAPLAB_OUTPUT_DIR cannot be empty")

    step = config.get('default_step', 0)
    if not step > 0:
        raise ValueError(f"CHAPLAB_DEFAULT_STEP must be positive, got {step}")

    t_end = config.get('default_t_end', 0)
    if not t_end > 0:
        raise ValueError(f"CHAPLAB_DEFAULT_T_END must be positive, got {t_end}")

    method = config.get('default_method')
    if method not in METHODS:
        raise ValueError(f"CHAPLAB_DEFAULT_METHOD must be one of {', '.join(METHODS)}, got {method}")

    tolerance = config.get('rkf45_tolerance', 0)
    if not tolerance > 0:
        raise ValueError(f"CHAPLAB_RKF45_TOLERANCE must be positive, got {tolerance}")

    workers = config.get('max_workers', 0)
    if workers < 1 or workers > 64:
        raise ValueError(f"CHAPLAB_MAX_WORKERS must be between 1 and 64, got {workers}")

    level = config.get('log_level')
    if level not in LOG_LEVELS:
        raise ValueError(f"CHAPLAB_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {level}")

    seed = config.get('default_seed', 0)
    if seed < 0:
        raise ValueError(f"CHAPLAB_DEFAULT_SEED must be non-negative, got {seed}")


def configure_logging(level: str = 'WARNING') -> None:
    """Set the root logging level and format (first call wins for the format)."""
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
