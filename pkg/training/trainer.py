"""
File that contains the joint training loop: ancestral Langevin sampling, the modified contrastive
divergence update of θ and the variational MCMC teaching update of (α, β).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from autodiff.tensors import as_batch
from core.errors import ContractViolation
from core.models import ModelSet
from sampling import streams
from sampling.samplers import SamplerConfig, ChainRecord, ancestral_langevin_sample, noise_initialized_sample
from training.objectives import ESTIMATORS, ebm_grad, vae_loss, regression_loss
from training.optim import AdamConfig, AdamState, apply_adam, clip_by_global_norm

logger = logging.getLogger(__name__)

TEACHING_MODES = ("variational", "fast")
INIT_MODES = ("ancestral", "noise")
LR_SCHEDULES = ("constant", "linear")


@dataclass(frozen=True)
class TrainConfig:
    r"""
    Hyperparameters of the joint training loop.

    :cvar batch_size: (:class:`int`) n, observed examples per iteration.
    :cvar synthesis_size: (:class:`int`) ñ, synthesized examples per iteration.
    :cvar sampler: (:class:`SamplerConfig`) Langevin settings; its seed is replaced every iteration.
    :cvar gamma: (:class:`float`) Weight of the KL-to-prior term.
    :cvar energy_adam: (:class:`AdamConfig`) Optimizer of θ.
    :cvar generator_adam: (:class:`AdamConfig`) Optimizer of α.
    :cvar encoder_adam: (:class:`AdamConfig`) Optimizer of β.
    :cvar iterations: (:class:`int`) T.
    :cvar eval_every: (:class:`int`) Callback cadence in iterations.
    :cvar checkpoint_every: (:class:`int`) Checkpoint cadence, 0 keeps only the final checkpoint.
    :cvar seed: (:class:`int`) Seed of the run stream (minibatches and per-iteration seeds).
    :cvar teaching: (:class:`str`) ``variational`` or ``fast``.
    :cvar init: (:class:`str`) Chain initialization, ``ancestral`` or ``noise``.
    :cvar lr_schedule: (:class:`str`) ``constant`` or ``linear`` decay towards zero at T.
    :cvar clip_norm: (:class:`Optional`\[:class:`float`]) Global gradient norm clip.
    :cvar weight_decay: (:class:`float`) L2 coefficient on θ.
    :cvar estimator: (:class:`str`) ELBO estimator, see :func:`training.objectives.vae_loss`.
    """
    batch_size: int = 100
    synthesis_size: int = 100
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    gamma: float = 2.0
    energy_adam: AdamConfig = field(default_factory=lambda: AdamConfig(lr=1e-4))
    generator_adam: AdamConfig = field(default_factory=lambda: AdamConfig(lr=3e-4))
    encoder_adam: AdamConfig = field(default_factory=lambda: AdamConfig(lr=3e-4))
    iterations: int = 1000
    eval_every: int = 100
    checkpoint_every: int = 0
    seed: int = 0
    teaching: str = "variational"
    init: str = "ancestral"
    lr_schedule: str = "constant"
    clip_norm: Optional[float] = None
    weight_decay: float = 0.0
    estimator: str = "reparameterized"

    def __post_init__(self):
        if self.batch_size < 1 or self.synthesis_size < 1:
            raise ContractViolation(f"Batch sizes must be >= 1, got n={self.batch_size}, ñ={self.synthesis_size}")
        if self.gamma < 0:
            raise ContractViolation(f"gamma must be >= 0, got {self.gamma}")
        if self.iterations < 1 or self.eval_every < 1 or self.checkpoint_every < 0:
            raise ContractViolation("Need iterations >= 1, eval_every >= 1 and checkpoint_every >= 0")
        if self.teaching not in TEACHING_MODES:
            raise ContractViolation(f"Unknown teaching mode {self.teaching!r}, expected one of {TEACHING_MODES}")
        if self.init not in INIT_MODES:
            raise ContractViolation(f"Unknown chain init {self.init!r}, expected one of {INIT_MODES}")
        if self.teaching == "fast" and self.init != "ancestral":
            raise ContractViolation("Fast teaching regresses on the ancestral latents and needs init = ancestral")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ContractViolation(f"Unknown lr schedule {self.lr_schedule!r}, expected one of {LR_SCHEDULES}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ContractViolation(f"clip_norm must be positive, got {self.clip_norm}")
        if self.weight_decay < 0:
            raise ContractViolation(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.estimator not in ESTIMATORS:
            raise ContractViolation(f"Unknown estimator {self.estimator!r}, expected one of {ESTIMATORS}")
        if self.seed < 0:
            raise ContractViolation(f"Seed must be non-negative, got {self.seed}")

    def lr_scale(self, iteration: int) -> float:
        """Learning-rate multiplier of the 0-based ``iteration``."""
        if self.lr_schedule == "linear":
            return 1.0 - iteration / self.iterations
        return 1.0


@dataclass
class LossReport:
    """
    Observables of one training iteration.

    :cvar iteration: (:class:`int`) 1-based index of the finished iteration.
    :cvar positive_energy: (:class:`float`) Mean U over the data batch.
    :cvar negative_energy: (:class:`float`) Mean U over the revised samples.
    :cvar reconstruction: (:class:`float`) Mean reconstruction NLL.
    :cvar kl: (:class:`float`) Mean KL-to-prior (0 in fast teaching).
    :cvar vae_loss: (:class:`float`) ``reconstruction + γ·kl``.
    :cvar energy_gap: (:class:`float`) Mean ``U(x̂) - U(x̃)``.
    """
    iteration: int
    positive_energy: float
    negative_energy: float
    reconstruction: float
    kl: float
    vae_loss: float
    energy_gap: float

    def as_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (f"iter {self.iteration}: U+ {self.positive_energy:.4f} U- {self.negative_energy:.4f} "
                f"rec {self.reconstruction:.4f} kl {self.kl:.4f} gap {self.energy_gap:.4f}")


@dataclass
class TrainState:
    """
    Everything a resumed run needs: the models, the optimizer moments, the run stream and the
    number of finished iterations.
    """
    models: ModelSet
    optimizers: dict[str, AdamState]
    rng: np.random.Generator
    iteration: int = 0

    @classmethod
    def start(cls, models: ModelSet, seed: int) -> TrainState:
        optimizers = {name: AdamState.for_params(params) for name, params in models.param_stores().items()}
        return cls(models, optimizers, streams.stream(seed, streams.RUN), 0)


def _draw_samples(models: ModelSet, batch: int, cfg: TrainConfig, seed: int, y) -> ChainRecord:
    sampler = cfg.sampler.with_seed(seed)
    if cfg.init == "noise":
        return noise_initialized_sample(models.energy, batch, sampler, y)
    return ancestral_langevin_sample(models.generator, models.energy, batch, sampler, y)


def _step(state: TrainState, data: np.ndarray, cfg: TrainConfig, seed: int, lr_scale: float,
          y_data, y_samples, synthesis_size: int) -> LossReport:
    models = state.models
    m, g, e = models.energy, models.generator, models.encoder

    # (1) ancestral Langevin sampling
    record = _draw_samples(models, synthesis_size, cfg, seed, y_samples)
    samples = record.final
    positive = float(np.mean(m.energies(data, y_data)))
    negative = float(np.mean(m.energies(samples, y_samples)))

    # (2) modified contrastive divergence on θ
    energy_grads = ebm_grad(m, data, samples, cfg.weight_decay, y_data, y_samples)

    # (3) teaching of the generator on the revised samples, which are constants here
    updates = [(m.params, energy_grads, "energy", cfg.energy_adam)]
    if cfg.teaching == "fast":
        loss, generator_grads = regression_loss(g, record.latents, samples, y_samples)
        updates.append((g.params, generator_grads, "generator", cfg.generator_adam))
        reconstruction, kl, total = loss, 0.0, loss
    else:
        vae = vae_loss(g, e, samples, cfg.gamma, seed, y_samples, cfg.estimator)
        updates.append((g.params, vae.generator_grads, "generator", cfg.generator_adam))
        updates.append((e.params, vae.encoder_grads, "encoder", cfg.encoder_adam))
        reconstruction, kl, total = vae.reconstruction, vae.kl, vae.loss

    # every loss is computed before the first parameter moves, so a failed step leaves the state untouched
    for params, grads, name, adam in updates:
        apply_adam(params, clip_by_global_norm(grads, cfg.clip_norm), state.optimizers[name], adam, lr_scale)

    state.iteration += 1
    return LossReport(state.iteration, positive, negative, reconstruction, kl, total, record.energy_gap)


def train_iteration(state: TrainState, data, cfg: TrainConfig, seed: int, lr_scale: float = 1.0) -> LossReport:
    """
    One iteration of the joint algorithm on an observed batch.

    Sample (x̂, x̃) with the ancestral Langevin sampler, then update θ by Adam on
    :func:`ebm_grad`, then update (α, β) by Adam on :func:`vae_loss` over x̃.

    :param state: (:class:`TrainState`) Models and optimizer moments, updated in place.
    :param data: Observed batch ``(n, D)``.
    :param cfg: (:class:`TrainConfig`)
    :param seed: (:class:`int`) Seed of this iteration's sampler and reparameterization streams.
    :param lr_scale: (:class:`float`) Multiplier of every learning rate.
    :return: (:class:`LossReport`)
    :raises DivergedChainError: when a Langevin chain leaves the finite range.
    :raises ContractViolation: on a non-finite loss or a non-positive variance.

    A step that raises updates no parameter and no optimizer moment.
    """
    data = as_batch(data, state.models.energy.data_dim, state.models.energy.dtype, "data batch")
    if state.models.cond_dim:
        raise ContractViolation("Conditional models are trained with conditional_train_iteration")
    return _step(state, data, cfg, seed, lr_scale, None, None, cfg.synthesis_size)


def conditional_train_iteration(state: TrainState, y, x, cfg: TrainConfig, seed: int,
                                lr_scale: float = 1.0) -> LossReport:
    """
    One iteration of the conditional variant on paired examples ``(y_i, x_i)``.

    Every synthesized example is drawn for the condition of the matching observed example, so the
    synthesis batch has the size of the paired batch.

    :param y: Conditions ``(n, C)``.
    :param x: Targets ``(n, D)``.
    """
    models = state.models
    if models.cond_dim == 0:
        raise ContractViolation("conditional_train_iteration needs conditional models")
    x = as_batch(x, models.energy.data_dim, models.energy.dtype, "target batch")
    y = as_batch(y, models.cond_dim, models.energy.dtype, "condition batch")
    if x.shape[0] != y.shape[0]:
        raise ContractViolation(f"Paired batch sizes differ: {y.shape[0]} conditions vs {x.shape[0]} targets")
    return _step(state, x, cfg, seed, lr_scale, y, y, x.shape[0])


Callback = Callable[[TrainState, LossReport], None]
Checkpointer = Callable[[TrainState], Path]


def train_loop(state: TrainState, dataset, cfg: TrainConfig, callbacks: Iterable[Callback] = (),
               checkpointer: Optional[Checkpointer] = None, conditions=None) -> list[Path]:
    """
    Run the iterations ``state.iteration + 1 .. cfg.iterations`` on shuffled minibatches.

    Each iteration draws its minibatch indices and its seed from ``state.rng``, so a run resumed from
    a checkpoint continues exactly as the uninterrupted one.

    :param dataset: Observed examples ``(N, D)``.
    :param callbacks: Called with ``(state, report)`` every ``cfg.eval_every`` iterations and at the end.
    :param checkpointer: Persists the state and returns the written path.
    :param conditions: Conditions ``(N, C)`` for conditional models.
    :return: (:class:`list`) Paths of the written checkpoints.
    """
    models = state.models
    dataset = as_batch(dataset, models.energy.data_dim, models.energy.dtype, "dataset")
    if dataset.shape[0] == 0:
        raise ContractViolation("Training needs a non-empty dataset")
    if conditions is not None:
        conditions = as_batch(conditions, models.cond_dim, models.energy.dtype, "conditions")
        if conditions.shape[0] != dataset.shape[0]:
            raise ContractViolation("Conditions and dataset differ in length")
    callbacks = list(callbacks)
    paths: list[Path] = []
    size = dataset.shape[0]
    replace = cfg.batch_size > size
    if replace:
        logger.warning(f"Batch size {cfg.batch_size} exceeds dataset size {size}; drawing with replacement")

    logger.info(f"Training from iteration {state.iteration} to {cfg.iterations} on {size} examples")
    try:
        while state.iteration < cfg.iterations:
            lr_scale = cfg.lr_scale(state.iteration)
            rng_state = state.rng.bit_generator.state
            index = state.rng.choice(size, cfg.batch_size, replace=replace)
            seed = streams.next_seed(state.rng)
            try:
                if conditions is None:
                    report = train_iteration(state, dataset[index], cfg, seed, lr_scale)
                else:
                    report = conditional_train_iteration(state, conditions[index], dataset[index], cfg, seed,
                                                         lr_scale)
            except Exception:
                # the abort checkpoint then replays this iteration on resume
                state.rng.bit_generator.state = rng_state
                raise

            last = state.iteration == cfg.iterations
            if state.iteration % cfg.eval_every == 0 or last:
                logger.info(report.summary())
                for callback in callbacks:
                    callback(state, report)
            if checkpointer is not None and not last and cfg.checkpoint_every \
                    and state.iteration % cfg.checkpoint_every == 0:
                paths.append(checkpointer(state))
    except Exception:
        logger.exception(f"Training aborted at iteration {state.iteration + 1}")
        if checkpointer is not None:
            paths.append(checkpointer(state))
        raise

    if checkpointer is not None:
        paths.append(checkpointer(state))
    return paths
