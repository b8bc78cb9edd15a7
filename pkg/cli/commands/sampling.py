"""
Sampling commands for the CLI
"""
import logging
from pathlib import Path

import click
import numpy as np

from cli.runner import draw_samples, evaluate_predictions, open_checkpoint
from cli.utils import OVERRIDE_SETTINGS, echo_metrics, exit_on_failure, parse_override_args
from core.errors import ContractViolation
from diagnostics.quadrature import MAX_DIMS
from figures.emit import emit_figures, read_points_csv, write_points_csv
from sampling.samplers import predict as predict_points

logger = logging.getLogger(__name__)


def _output_dir(checkpoint: str, output, name: str) -> Path:
    if output:
        return Path(output)
    # checkpoints live in <run_dir>/checkpoints/
    return Path(checkpoint).resolve().parent.parent / name


@click.command("sample", context_settings=OVERRIDE_SETTINGS)
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--count", default=1000, show_default=True, type=click.IntRange(min=1), help="Number of chains.")
@click.option("--steps", type=click.IntRange(min=0), help="Langevin steps, the config value by default.")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--output", type=click.Path(file_okay=False), help="Output directory, <run_dir>/samples by default.")
@click.pass_context
@exit_on_failure
def sample(ctx: click.Context, checkpoint, count, steps, seed, output):
    """
    Draw samples from a checkpoint: ancestral draws from the generator revised by Langevin dynamics
    on the energy. ``--steps 0`` keeps the pure ancestral samples.
    """
    config, state = open_checkpoint(checkpoint, parse_override_args(ctx.args))
    if state.models.cond_dim:
        raise ContractViolation("The checkpoint holds conditional models, use the predict command")
    record = draw_samples(state.models, config, count, seed, steps=steps, keep_frames=True)
    d = config.data_dim()
    grid = config.grid_spec(d) if d <= MAX_DIMS else None
    out = _output_dir(checkpoint, output, "samples")
    emit_figures(out, state.models, None, record, grid, interpolation_seed=seed)
    click.echo(f"samples = {out / 'figures' / 'samples_revised.csv'}")
    click.echo(f"energy_gap = {record.energy_gap}")


@click.command("predict", context_settings=OVERRIDE_SETTINGS)
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--conditions", type=click.Path(exists=True, dir_okay=False),
              help="CSV of conditions y; held-out pairs of the run dataset by default.")
@click.option("--steps", type=click.IntRange(min=0), help="Langevin steps, the config value by default.")
@click.option("--output", type=click.Path(file_okay=False), help="Output directory, <run_dir>/predictions by default.")
@click.pass_context
@exit_on_failure
def predict(ctx: click.Context, checkpoint, conditions, steps, output):
    """
    Noise-free conditional prediction from a checkpoint: ``g(y, z = 0)`` refined by noiseless
    Langevin steps on ``U(x, y)``.
    """
    config, state = open_checkpoint(checkpoint, parse_override_args(ctx.args))
    models = state.models
    if not models.cond_dim:
        raise ContractViolation("The checkpoint holds unconditional models, use the sample command")
    out = _output_dir(checkpoint, output, "predictions")
    if conditions is None:
        echo_metrics(evaluate_predictions(models, config, out, steps))
        click.echo(f"predictions = {out / 'predictions.csv'}")
        return
    y = read_points_csv(conditions).astype(config.dtype())
    sampler = config.sampler_config(config.data_dim(), steps=steps, noise=False)
    points = predict_points(models.generator, models.energy, y, sampler)
    path = write_points_csv(out / "predictions.csv", points)
    logger.info(f"Predicted {points.shape[0]} points, mean {np.mean(points, axis=0)}")
    click.echo(f"predictions = {path}")
