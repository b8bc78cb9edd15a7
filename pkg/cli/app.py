"""
This module provides the command-line interface of the library
"""
import logging
from typing import Optional, Sequence

import click

from cli.commands import check, evaluate_checkpoint, predict, sample, sweep, testbed, train, train_cond
from cli.utils import EXIT_FAILURE, EXIT_OK

logger = logging.getLogger(__name__)

# Packages whose level main.py pins; --verbose lowers them with the root logger.
VERBOSE_PACKAGES = ("training", "sampling")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose):
    """Joint training of energy-based models, generators and inference networks."""
    if verbose:
        for name in ("", *VERBOSE_PACKAGES):
            logging.getLogger(name).setLevel(logging.DEBUG)


cli.add_command(train)
cli.add_command(train_cond)
cli.add_command(sample)
cli.add_command(predict)
cli.add_command(testbed)
cli.add_command(evaluate_checkpoint)
cli.add_command(sweep)
cli.add_command(check)


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command and return its exit code: 0 on success, 2 for usage and config errors,
    1 for runtime failures.

    :param argv: Arguments without the program name, ``sys.argv[1:]`` by default.
    """
    try:
        code = cli.main(args=list(argv) if argv is not None else None, prog_name="ebmteach",
                        standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_FAILURE
    except Exception:
        logger.exception("Command failed")
        return EXIT_FAILURE
    return code if isinstance(code, int) else EXIT_OK
