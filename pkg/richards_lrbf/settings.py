"""
Settings
Environment-driven configuration and logging setup for the command line
"""

import logging
import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv

ENV_PREFIX = 'RICHARDS_LRBF_'
ENV_KEYS = {
    'LOG_LEVEL': 'log_level',
    'DATA_DIR': 'data_directory',
    'SCENARIO_DIR': 'scenario_directory',
    'OUTPUT_DIR': 'output_directory',
}
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# Default configurations
DEFAULT_CONFIG = {
    'data_directory': 'soil_data',
    'scenario_directory': 'scenarios',
    'output_directory': 'results',
    'log_level': 'INFO',
    'event_logging': True,
    'oracle_refinement': 4,
    'condition_limit': 1e14,
}


def load_settings(overrides: Optional[Dict[str, Any]] = None,
                  env_file: Optional[str] = None) -> Dict[str, Any]:
    """
    Configuration with precedence: explicit overrides, then environment
    (a ``.env`` file included), then the package defaults.
    """
    load_dotenv(env_file)
    settings = DEFAULT_CONFIG.copy()
    for suffix, key in ENV_KEYS.items():
        value = os.environ.get(ENV_PREFIX + suffix)
        if value:
            settings[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = value
    return settings


def configure_logging(level: str = 'INFO'):
    """Install one stream handler on the root logger."""
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        numeric = logging.INFO
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_richards_lrbf', False):
            root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._richards_lrbf = True
    root.addHandler(handler)
    root.setLevel(numeric)
