"""
Training commands for the CLI
"""
import logging

import click

from cli.runner import run_training
from cli.utils import OVERRIDE_SETTINGS, echo_metrics, exit_on_failure, resolve_config

logger = logging.getLogger(__name__)


@click.command("train", context_settings=OVERRIDE_SETTINGS)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config file.")
@click.option("--resume", is_flag=True, help="Continue from the latest checkpoint of the run directory.")
@click.pass_context
@exit_on_failure
def train(ctx: click.Context, config_path, resume):
    """
    Jointly train the energy model, the generator and the encoder.

    Any ``--section.key value`` after the options overrides the config file.
    """
    config = resolve_config(config_path, ctx.args)
    logger.info(f"Training {config.experiment.name} into {config.output_path()}")
    summary = run_training(config, resume=resume)
    click.echo(f"run_dir = {summary.run_dir}")
    if summary.report is not None:
        click.echo(summary.report.summary())
    echo_metrics(summary.metrics)


@click.command("train-cond", context_settings=OVERRIDE_SETTINGS)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config file.")
@click.option("--resume", is_flag=True, help="Continue from the latest checkpoint of the run directory.")
@click.pass_context
@exit_on_failure
def train_cond(ctx: click.Context, config_path, resume):
    """
    Train the conditional models on (y, x) pairs and report held-out prediction errors.

    Without a config file the run uses the two-branch dataset.
    """
    defaults = {"model.conditional": "true"}
    if not config_path:
        defaults["dataset.kind"] = "two_branch"
    config = resolve_config(config_path, ctx.args, defaults)
    summary = run_training(config, resume=resume)
    click.echo(f"run_dir = {summary.run_dir}")
    echo_metrics(summary.metrics)
