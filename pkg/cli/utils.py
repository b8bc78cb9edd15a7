"""
Utility functions for CLI commands.
"""
import functools
import logging
from typing import Iterable, Optional

import click

from config import RunConfig, apply_overrides, load_config, parse_override_args
from core.errors import (CheckpointError, ConfigError, ContractViolation, DivergedChainError, MissingTraceError,
                         NonNormalizableError)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Failures of a well-formed command: reported with a diagnostic and exit code 1.
RUNTIME_ERRORS = (CheckpointError, ContractViolation, DivergedChainError, MissingTraceError, NonNormalizableError,
                  OSError, FloatingPointError)

# Commands that accept ``--section.key value`` overrides after their own options.
OVERRIDE_SETTINGS = {"ignore_unknown_options": True, "allow_extra_args": True}


def exit_on_failure(func):
    """
    Decorator for command callbacks: a config error exits with the usage code, a runtime failure
    with exit code 1. Both print a one-line diagnostic to stderr.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            logger.debug(f"Config error in {ctx.command_path}: {e}")
            click.echo(f"Error: {e}", err=True)
            ctx.exit(EXIT_USAGE)
        except RUNTIME_ERRORS as e:
            logger.exception(f"{ctx.command_path} failed")
            click.echo(f"Error: {type(e).__name__}: {e}", err=True)
            ctx.exit(EXIT_FAILURE)

    return wrapper


def resolve_config(config_path: Optional[str], extra_args: Iterable[str], defaults: Optional[dict] = None) -> RunConfig:
    """
    Config of a command: the file (or the built-in defaults), then ``defaults`` for keys the command
    line leaves unset, then the ``--section.key value`` overrides.

    :raises ConfigError: on an unreadable file, unknown keys or values that do not validate.
    """
    config = load_config(config_path) if config_path else RunConfig()
    overrides = dict(defaults or {})
    overrides.update(parse_override_args(extra_args))
    return apply_overrides(config, overrides)


def parse_list(text: Optional[str], cast=float) -> list:
    """Comma-separated values of a sweep axis, an empty list for a missing option."""
    if not text:
        return []
    try:
        return [cast(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise click.BadParameter(f"{text!r} is not a comma-separated list of {cast.__name__} values") from e


def echo_metrics(metrics: dict) -> None:
    for key in sorted(metrics):
        click.echo(f"{key} = {metrics[key]}")
