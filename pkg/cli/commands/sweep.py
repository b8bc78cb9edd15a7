"""
Sweep command for the CLI
"""
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor

import click

from cli.runner import sweep_config, sweep_worker
from cli.utils import EXIT_FAILURE, OVERRIDE_SETTINGS, exit_on_failure, parse_list, resolve_config
from config import dump_config

logger = logging.getLogger(__name__)

# Sweep option to the config key it varies.
AXES = (
    ("gamma", "train.gamma", float),
    ("steps", "langevin.steps", int),
    ("step_size", "langevin.step_size", float),
    ("latent_dim", "model.latent_dim", int),
)


def sweep_points(values: dict[str, list]) -> list[dict[str, str]]:
    """Cartesian product of the non-empty axes as override dictionaries."""
    axes = [(key, values[option]) for option, key, _ in AXES if values.get(option)]
    if not axes:
        return [{}]
    keys = [key for key, _ in axes]
    return [dict(zip(keys, (repr(v) if isinstance(v, float) else str(v) for v in combo)))
            for combo in itertools.product(*(vals for _, vals in axes))]


@click.command("sweep", context_settings=OVERRIDE_SETTINGS)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Base run config file.")
@click.option("--gamma", help="Comma-separated values of train.gamma.")
@click.option("--steps", help="Comma-separated values of langevin.steps.")
@click.option("--step-size", help="Comma-separated values of langevin.step_size.")
@click.option("--latent-dim", help="Comma-separated values of model.latent_dim.")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1), help="Parallel worker processes.")
@click.pass_context
@exit_on_failure
def sweep(ctx: click.Context, config_path, gamma, steps, step_size, latent_dim, jobs):
    """
    Train one run per combination of the given values, each in its own directory under the base
    run directory.
    """
    base = resolve_config(config_path, ctx.args)
    raw = {"gamma": gamma, "steps": steps, "step_size": step_size, "latent_dim": latent_dim}
    values = {option: parse_list(raw[option], cast) for option, _, cast in AXES}
    root = base.output_path()
    configs = [sweep_config(base, overrides, root) for overrides in sweep_points(values)]
    texts = [dump_config(config) for config in configs]
    logger.info(f"Sweeping {len(texts)} runs under {root} with {jobs} worker(s)")

    if jobs == 1:
        outcomes = [sweep_worker(text) for text in texts]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(sweep_worker, texts))

    for name, ok, detail in outcomes:
        click.echo(f"{'OK' if ok else 'FAILED'} {name}: {detail}")
    if not all(ok for _, ok, _ in outcomes):
        ctx.exit(EXIT_FAILURE)
