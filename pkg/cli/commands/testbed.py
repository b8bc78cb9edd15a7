"""
Linear-Gaussian testbed command for the CLI
"""
import logging
import os
from pathlib import Path

import click

from cli.runner import TestbedSettings, run_testbed
from cli.utils import exit_on_failure
from config import OUTPUT_ROOT_ENV
from config.run_config import DEFAULT_OUTPUT_ROOT
from training.objectives import ESTIMATORS
from training.trainer import INIT_MODES

logger = logging.getLogger(__name__)

defaults = TestbedSettings()


@click.command("testbed")
@click.option("--mean", default=defaults.data_mean, show_default=True, help="Data mean m*.")
@click.option("--std", default=defaults.data_std, show_default=True, type=click.FloatRange(min=0, min_open=True),
              help="Data standard deviation s*.")
@click.option("--sigma", default=defaults.sigma, show_default=True, type=click.FloatRange(min=0, min_open=True),
              help="Generator noise σ.")
@click.option("--size", default=defaults.size, show_default=True, type=click.IntRange(min=1))
@click.option("--iterations", default=defaults.iterations, show_default=True, type=click.IntRange(min=1))
@click.option("--steps", default=defaults.steps, show_default=True, type=click.IntRange(min=0))
@click.option("--step-size", default=defaults.step_size, show_default=True,
              type=click.FloatRange(min=0, min_open=True))
@click.option("--batch", default=defaults.batch_size, show_default=True, type=click.IntRange(min=1))
@click.option("--lr", default=defaults.lr, show_default=True, type=click.FloatRange(min=0))
@click.option("--beta2", default=defaults.beta2, show_default=True,
              type=click.FloatRange(min=0, max=1, max_open=True), help="Second-moment decay of Adam.")
@click.option("--gamma", default=defaults.gamma, show_default=True, type=click.FloatRange(min=0))
@click.option("--seed", default=defaults.seed, show_default=True, type=click.IntRange(min=0))
@click.option("--init", default=defaults.init, show_default=True, type=click.Choice(INIT_MODES))
@click.option("--estimator", default=defaults.estimator, show_default=True, type=click.Choice(ESTIMATORS))
@click.option("--output", type=click.Path(file_okay=False), help="Run directory, <output root>/testbed by default.")
@exit_on_failure
def testbed(mean, std, sigma, size, iterations, steps, step_size, batch, lr, beta2, gamma, seed, init, estimator,
            output):
    """
    Train the one-dimensional linear-Gaussian models and report the closed-form divergences and
    the residuals of the equilibrium conditions.
    """
    settings = TestbedSettings(data_mean=mean, data_std=std, sigma=sigma, size=size, iterations=iterations,
                               steps=steps, step_size=step_size, batch_size=batch, lr=lr, beta2=beta2, gamma=gamma,
                               seed=seed, init=init, estimator=estimator)
    run_dir = Path(output) if output else Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)) / "testbed"
    summary = run_testbed(settings, run_dir)
    click.echo(f"run_dir = {run_dir}")
    click.echo(f"theta = {summary['theta']}")
    click.echo(f"generator = {summary['generator']}")
    click.echo(f"encoder = {summary['encoder']}")
    for name, value in summary["divergences"].items():
        click.echo(f"{name} = {value}")
    residuals = summary["nash_residuals"]
    if residuals is None:
        click.echo("nash_residuals = unavailable")
    else:
        for name, value in residuals.items():
            click.echo(f"{name} = {value:.3e}")
