"""
Module with the run configuration and its plain-text file format
"""

from .run_config import RunConfig, OUTPUT_ROOT_ENV
from .parser import load_config, parse_config, dump_config, apply_overrides, parse_override_args
