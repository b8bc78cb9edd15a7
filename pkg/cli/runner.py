"""
File that contains the run orchestration shared by the commands: building models and data from a
config, training with metrics, divergences and checkpoints, and the end-of-run evaluation.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config import RunConfig, dump_config, parse_config, apply_overrides
from core.errors import NonNormalizableError
from core.models import ModelSet, build_neural_models
from core.testbed import GaussianTestbed
from datasets.synthetic import make_dataset, paired_dataset
from diagnostics.analysis import mode_coverage
from diagnostics.divergences import DivergenceTrace, divergence_trace_update, nash_residuals
from diagnostics.quadrature import MAX_DIMS, grid_kl
from figures.emit import emit_figures, write_points_csv
from sampling.samplers import (ChainRecord, SamplerConfig, ancestral_langevin_sample, noise_initialized_sample,
                               predict)
from storage.checkpoints import (Checkpoint, checkpoint_from_state, checkpoint_path, latest_checkpoint,
                                 load_checkpoint, restore_state, save_checkpoint)
from storage.metrics import METRICS_FILE, MetricsWriter
from training.optim import AdamConfig
from training.trainer import LossReport, TrainConfig, TrainState, train_loop

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.txt"
EVAL_SAMPLES = 2000
HELD_OUT = 500
# Held-out conditional pairs come from a dataset seed this far from the training one.
HELD_OUT_SEED_OFFSET = 1000003


@dataclass
class RunSummary:
    r"""
    Outcome of a training command.

    :cvar run_dir: (:class:`Path`) Output directory.
    :cvar report: (:class:`LossReport`) Report of the last iteration.
    :cvar checkpoints: (:class:`list`\[:class:`Path`]) Written checkpoints.
    :cvar metrics: (:class:`dict`) End-of-run evaluation values.
    """
    run_dir: Path
    report: Optional[LossReport]
    checkpoints: list[Path] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


def build_models(config: RunConfig) -> ModelSet:
    d = config.data_dim()
    return build_neural_models(d, config.latent_dim(d), config.model.sigma, config.model.energy_widths,
                               config.model.generator_widths, config.model.encoder_widths, config.cond_dim(),
                               config.experiment.seed, config.experiment.precision)


def load_data(config: RunConfig, seed: Optional[int] = None, size: Optional[int] = None) -> np.ndarray:
    ds = config.dataset
    dataset = make_dataset(ds.kind, ds.modes, ds.radius, ds.std, ds.noise, ds.patch_dir, ds.patch_size)
    return dataset.generate(size or ds.size, ds.seed if seed is None else seed).astype(config.dtype())


def mode_centers(config: RunConfig) -> Optional[np.ndarray]:
    ds = config.dataset
    if ds.kind not in ("gaussian_grid", "gaussian_ring"):
        return None
    return make_dataset(ds.kind, ds.modes, ds.radius, ds.std).centers()


def coverage_radius(config: RunConfig) -> float:
    """Three component standard deviations, with a floor for noiseless mixtures."""
    return max(3.0 * config.dataset.std, 0.05)


def open_checkpoint(path: Union[str, Path], overrides: Optional[dict] = None) -> tuple[RunConfig, TrainState]:
    """Rebuild the config and the training state stored in a checkpoint."""
    checkpoint: Checkpoint = load_checkpoint(path)
    config = parse_config(checkpoint.config_text)
    if overrides:
        config = apply_overrides(config, overrides)
    return config, restore_state(checkpoint, build_models(config))


def draw_samples(models: ModelSet, config: RunConfig, count: int, seed: int, steps: Optional[int] = None,
                 keep_frames: bool = False, y=None) -> ChainRecord:
    sampler = config.sampler_config(config.data_dim(), steps=steps, keep_frames=keep_frames).with_seed(seed)
    if config.train.init == "noise":
        return noise_initialized_sample(models.energy, count, sampler, y)
    return ancestral_langevin_sample(models.generator, models.energy, count, sampler, y)


def evaluate(models: ModelSet, config: RunConfig, data: np.ndarray, record: ChainRecord) -> dict:
    """Grid KL of the data against p_θ (at most two dimensions), mode coverage and the energy gap."""
    metrics = {"energy_gap": record.energy_gap}
    d = config.data_dim()
    if d <= MAX_DIMS and models.cond_dim == 0:
        metrics["grid_kl"] = grid_kl(data, models.energy, config.grid_spec(d))
    centers = mode_centers(config)
    if centers is not None:
        fractions = mode_coverage(record.final, centers, coverage_radius(config))
        metrics["mode_coverage_min"] = float(fractions.min())
        metrics["mode_coverage"] = [float(f) for f in fractions]
    return metrics


def _start_state(config: RunConfig, run_dir: Path, resume: bool, config_text: str) -> TrainState:
    models = build_models(config)
    previous = latest_checkpoint(run_dir) if resume else None
    if previous is None:
        return TrainState.start(models, config.experiment.seed)
    checkpoint = load_checkpoint(previous)
    if checkpoint.config_text != config_text:
        logger.warning(f"Config of {previous} differs from the current config; resuming anyway")
    logger.info(f"Resuming from {previous} at iteration {checkpoint.iteration}")
    return restore_state(checkpoint, models)


def run_training(config: RunConfig, resume: bool = False) -> RunSummary:
    """
    Train a run end to end: data, models, the training loop with metrics and checkpoints, then
    the evaluation and the figures of the final models.
    """
    run_dir = config.output_path()
    run_dir.mkdir(parents=True, exist_ok=True)
    config_text = dump_config(config)
    (run_dir / CONFIG_FILE).write_text(config_text, encoding="utf-8")

    data = load_data(config)
    d = config.data_dim()
    state = _start_state(config, run_dir, resume, config_text)
    cfg = config.train_config(d)
    conditions = None
    if config.model.conditional:
        conditions, data = paired_dataset(data)

    trace = DivergenceTrace()
    grid = config.grid_spec(d) if d <= MAX_DIMS else None
    last: list[LossReport] = []

    with MetricsWriter(run_dir / METRICS_FILE) as writer:
        def record_metrics(current: TrainState, report: LossReport) -> None:
            if grid is not None and conditions is None:
                divergence_trace_update(trace, report.iteration, current.models, data, grid,
                                        seed=config.experiment.seed + report.iteration)
            writer.log(report, trace.tail() if conditions is None else None)
            last[:] = [report]

        def checkpointer(current: TrainState) -> Path:
            return save_checkpoint(checkpoint_path(run_dir, current.iteration),
                                   checkpoint_from_state(current, config_text))

        paths = train_loop(state, data, cfg, [record_metrics], checkpointer, conditions)

    summary = RunSummary(run_dir, last[0] if last else None, paths)
    if conditions is None:
        record = draw_samples(state.models, config, EVAL_SAMPLES, config.experiment.seed, keep_frames=True)
        summary.metrics = evaluate(state.models, config, data, record)
        emit_figures(run_dir, state.models, data, record, grid)
    else:
        summary.metrics = evaluate_predictions(state.models, config, run_dir)
    logger.info(f"Run {config.experiment.name} finished: {summary.metrics}")
    return summary


def held_out_pairs(config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    points = load_data(config, seed=config.dataset.seed + HELD_OUT_SEED_OFFSET, size=HELD_OUT)
    return paired_dataset(points)


def evaluate_predictions(models: ModelSet, config: RunConfig, run_dir: Path, steps: Optional[int] = None) -> dict:
    """
    Noise-free predictions on held-out pairs, compared with the generator-only prediction at ``z = 0``.
    """
    y, x = held_out_pairs(config)
    sampler = config.sampler_config(config.data_dim(), steps=steps, noise=False)
    predictions = predict(models.generator, models.energy, y, sampler)
    baseline = models.generator.generate(np.zeros((y.shape[0], models.generator.latent_dim)), None, y)
    write_points_csv(Path(run_dir) / "predictions.csv", predictions)
    return {"predict_mse": float(np.mean((predictions - x) ** 2)),
            "generator_mse": float(np.mean((baseline - x) ** 2))}


def sweep_config(base: RunConfig, overrides: dict[str, str], root: Path) -> RunConfig:
    """Config of one sweep point: the overrides applied and a run directory named after them."""
    label = "-".join(f"{key.rpartition('.')[2]}{value}" for key, value in overrides.items())
    config = apply_overrides(base, overrides)
    name = f"{base.experiment.name}-{label}" if label else base.experiment.name
    return replace(config, experiment=replace(config.experiment, name=name, output_dir=str(root / name)))


def sweep_worker(config_text: str) -> tuple[str, bool, str]:
    """Train one sweep point in a worker process; never raises."""
    config = parse_config(config_text)
    try:
        summary = run_training(config)
        return config.experiment.name, True, str(summary.metrics)
    except Exception as e:
        logger.exception(f"Sweep run {config.experiment.name} failed")
        return config.experiment.name, False, f"{type(e).__name__}: {e}"


@dataclass(frozen=True)
class TestbedSettings:
    """
    Settings of a linear-Gaussian testbed run. The testbed has no config file; the command flags map
    onto these fields.

    With the defaults θ reaches ``(m*/s*², 1/s*²)``, ``(8, 4)`` for the default data, from its random start
    within ``iterations``; the linear decay takes the learning rate to zero at the end.
    """
    data_mean: float = 2.0
    data_std: float = 0.5
    sigma: float = 0.3
    size: int = 5000
    iterations: int = 5000
    steps: int = 15
    step_size: float = 0.2
    batch_size: int = 500
    lr: float = 0.02
    beta2: float = 0.99
    gamma: float = 1.0
    seed: int = 0
    init: str = "ancestral"
    estimator: str = "reparameterized"
    eval_every: int = 50


def testbed_train_config(run: TestbedSettings) -> TrainConfig:
    adam = AdamConfig(lr=run.lr, beta2=run.beta2)
    sampler = SamplerConfig(run.steps, run.step_size, True, None, run.seed)
    return TrainConfig(batch_size=run.batch_size, synthesis_size=run.batch_size, sampler=sampler, gamma=run.gamma,
                       energy_adam=adam, generator_adam=adam, encoder_adam=adam, iterations=run.iterations,
                       eval_every=run.eval_every, seed=run.seed, init=run.init, lr_schedule="linear",
                       estimator=run.estimator)


def run_testbed(run: TestbedSettings, run_dir: Union[str, Path]) -> dict:
    """
    Train the linear-Gaussian testbed from a random start, tracking the closed-form divergences,
    and report the final parameters with their Nash residuals.

    Writes ``metrics.csv`` and ``summary.json`` into ``run_dir``.

    :return: (:class:`dict`) The summary written to ``summary.json``.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    testbed = GaussianTestbed.random(run.data_mean, run.data_std, run.sigma, run.seed)
    data = testbed.sample_data(run.size, run.seed)
    cfg = testbed_train_config(run)
    state = TrainState.start(testbed.models(), run.seed)
    trace = DivergenceTrace()

    with MetricsWriter(run_dir / METRICS_FILE) as writer:
        def record_metrics(current: TrainState, report: LossReport) -> None:
            divergence_trace_update(trace, report.iteration, testbed=testbed)
            writer.log(report, trace.tail())

        train_loop(state, data, cfg, [record_metrics])

    summary = {
        "theta": [testbed.energy.theta1, testbed.energy.theta2],
        "generator": [testbed.generator.a, testbed.generator.b, testbed.generator.sigma],
        "encoder": [testbed.encoder.u, testbed.encoder.c, testbed.encoder.w],
        "divergences": trace.tail(),
    }
    try:
        residuals = nash_residuals(testbed, steps=run.steps, delta=run.step_size)
        summary["nash_residuals"] = asdict(residuals)
    except NonNormalizableError as e:
        logger.warning(f"Nash residuals unavailable: {e}")
        summary["nash_residuals"] = None
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Testbed run finished: {summary['nash_residuals']}")
    return summary
