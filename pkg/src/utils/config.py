import copy
import os
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from src.errors import ConfigError

OUT_DIR_ENV = "PERCOLATION_OUT_DIR"

DEFAULT_CONFIG: Dict[str, Any] = {
    'lattice': {
        'side_length': 7,
    },
    'ensemble': {
        'm': [1, 2, 4, 8, 16, 32, 84],
        'realizations': 4000,
        'seed': 20160104,
        'grid_stride': 1,
        'threads': 0,
        'oracle_check': True,
        'max_failure_rate': 0.001,
    },
    'observables': {
        'coherent': True,
        'incoherent': True,
        'cluster': True,
        'eigenstats': True,
    },
    'numerics': {
        'amplitude_tol': 1.0e-10,
        'settle_time': 200.0,
    },
    'output': {
        'out_dir': 'results',
        'progress': True,
    },
    'logging': {
        'level': 'INFO',
    },
}


def merge_dicts(default: Dict[str, Any], user: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in user.items():
        if key in default and isinstance(default[key], dict) and isinstance(value, dict):
            merge_dicts(default[key], value)
        else:
            default[key] = value
    return default


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load configuration from a YAML file on top of the defaults.

    Without a path the defaults are returned. `PERCOLATION_OUT_DIR` (also read
    from a `.env` file) overrides `output.out_dir`.
    """
    config = copy.deepcopy(DEFAULT_CONFIG)

    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        try:
            with open(config_path, 'r') as f:
                user_config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {config_path}: {e}") from e
        if not isinstance(user_config, dict):
            raise ConfigError(f"{config_path} must contain a mapping")
        merge_dicts(config, user_config)

    load_dotenv()
    out_dir = os.getenv(OUT_DIR_ENV)
    if out_dir:
        config['output']['out_dir'] = out_dir

    return config


def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Apply `section.key -> value` overrides, skipping values left as None."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, key = dotted.split('.', 1)
        config.setdefault(section, {})[key] = value
    return config
