"""
Evaluation commands for the CLI
"""
import logging

import click

from cli.runner import EVAL_SAMPLES, draw_samples, evaluate, load_data, open_checkpoint
from cli.utils import EXIT_FAILURE, OVERRIDE_SETTINGS, echo_metrics, exit_on_failure, parse_override_args
from core.errors import ContractViolation
from diagnostics.selfcheck import run_selfchecks

logger = logging.getLogger(__name__)


@click.command("eval", context_settings=OVERRIDE_SETTINGS)
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--count", default=EVAL_SAMPLES, show_default=True, type=click.IntRange(min=1),
              help="Number of Langevin chains for coverage and the energy gap.")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.pass_context
@exit_on_failure
def evaluate_checkpoint(ctx: click.Context, checkpoint, count, seed):
    """
    Evaluate a checkpoint: grid KL of the data against the energy model (two dimensions at most),
    mode coverage of the revised samples and the energy gap of the Langevin revision.
    """
    config, state = open_checkpoint(checkpoint, parse_override_args(ctx.args))
    if state.models.cond_dim:
        raise ContractViolation("Conditional checkpoints are evaluated by the predict command")
    record = draw_samples(state.models, config, count, seed)
    echo_metrics(evaluate(state.models, config, load_data(config), record))


@click.command("check")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.pass_context
def check(ctx: click.Context, seed):
    """
    Run the gradient and closed-form self-tests; exit code 1 when any of them fails.
    """
    results = run_selfchecks(seed)
    for result in results:
        click.echo(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"Self-checks failed: {', '.join(failed)}")
        ctx.exit(EXIT_FAILURE)
