"""
File that describes the run configuration: one dataclass per section of the config file and the
settings derived from them (effective Langevin step, latent size, training and grid configs).
"""
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from core.errors import ConfigError, ContractViolation
from diagnostics.quadrature import GridSpec
from sampling.samplers import SamplerConfig
from training.objectives import ESTIMATORS
from training.optim import AdamConfig
from training.trainer import INIT_MODES, LR_SCHEDULES, TEACHING_MODES, TrainConfig

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "EBMTEACH_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
PRECISIONS = ("float64", "float32")
DATASET_KINDS = ("gaussian_grid", "gaussian_ring", "ring", "two_spirals", "checkerboard", "patches", "two_branch")
# Dimension of a 32x32 RGB image; the automatic step scale keeps δ·sqrt(D) equal to a chain of that size.
REFERENCE_DIM = 3072
MAX_LATENT_DIM = 200


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "run"
    output_dir: str = ""
    precision: str = "float64"
    seed: int = 0


@dataclass(frozen=True)
class DatasetSection:
    kind: str = "gaussian_ring"
    size: int = 10000
    modes: int = 8
    radius: float = 0.8
    std: float = 0.05
    noise: float = 0.02
    patch_dir: str = ""
    patch_size: int = 4
    seed: int = 0


@dataclass(frozen=True)
class ModelSection:
    conditional: bool = False
    latent_dim: int = 0
    sigma: float = 0.3
    energy_widths: tuple[int, ...] = (64, 64)
    generator_widths: tuple[int, ...] = (64, 64)
    encoder_widths: tuple[int, ...] = (64, 64)


@dataclass(frozen=True)
class LangevinSection:
    steps: int = 15
    step_size: float = 0.002
    step_scale: str = "auto"
    noise: bool = True
    clamp: Optional[tuple[float, ...]] = None
    keep_frames: bool = False


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 100
    synthesis_size: int = 100
    gamma: float = 2.0
    iterations: int = 10000
    eval_every: int = 500
    checkpoint_every: int = 0
    teaching: str = "variational"
    init: str = "ancestral"
    lr_schedule: str = "constant"
    clip_norm: Optional[float] = None
    weight_decay: float = 0.0
    estimator: str = "reparameterized"


@dataclass(frozen=True)
class AdamSection:
    lr: float = 3e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def to_adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)


@dataclass(frozen=True)
class GridSection:
    lo: float = -4.0
    hi: float = 4.0
    resolution: int = 200
    bins: int = 32


@dataclass(frozen=True)
class RunConfig:
    """
    Complete description of an experiment. Every field of every section maps to one
    ``key = value`` line of the config file.
    """
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    langevin: LangevinSection = field(default_factory=LangevinSection)
    train: TrainSection = field(default_factory=TrainSection)
    adam_energy: AdamSection = field(default_factory=lambda: AdamSection(lr=1e-4))
    adam_generator: AdamSection = field(default_factory=AdamSection)
    adam_encoder: AdamSection = field(default_factory=AdamSection)
    grid: GridSection = field(default_factory=GridSection)

    @staticmethod
    def section_names() -> dict[str, str]:
        """File section header to attribute name."""
        return {f.name.replace("_", "."): f.name for f in fields(RunConfig)}

    def validate(self) -> None:
        """:raises ConfigError: naming the first offending key."""
        _check(self.experiment.name != "" and "/" not in self.experiment.name, "experiment.name",
               "must be a non-empty name without '/'")
        _check(self.experiment.precision in PRECISIONS, "experiment.precision", f"must be one of {PRECISIONS}")
        _check(self.experiment.seed >= 0, "experiment.seed", "must be >= 0")

        d = self.dataset
        _check(d.kind in DATASET_KINDS, "dataset.kind", f"must be one of {DATASET_KINDS}")
        _check(d.size >= 1, "dataset.size", "must be >= 1")
        _check(d.modes >= 1, "dataset.modes", "must be >= 1")
        _check(d.radius > 0, "dataset.radius", "must be > 0")
        _check(d.std >= 0, "dataset.std", "must be >= 0")
        _check(d.noise >= 0, "dataset.noise", "must be >= 0")
        _check(d.patch_size >= 1, "dataset.patch_size", "must be >= 1")
        _check(d.kind != "patches" or d.patch_dir != "", "dataset.patch_dir", "is required for patches")
        _check(d.seed >= 0, "dataset.seed", "must be >= 0")

        _check(self.model.latent_dim >= 0, "model.latent_dim", "must be >= 0 (0 picks a size from the data)")
        _check(self.model.sigma > 0, "model.sigma", "must be > 0")
        for name in ("energy_widths", "generator_widths", "encoder_widths"):
            _check(all(w >= 1 for w in getattr(self.model, name)), f"model.{name}", "widths must be >= 1")

        lv = self.langevin
        _check(lv.steps >= 0, "langevin.steps", "must be >= 0")
        _check(lv.step_size > 0, "langevin.step_size", "must be > 0")
        _check(lv.step_scale == "auto" or _positive_number(lv.step_scale), "langevin.step_scale",
               "must be 'auto' or a positive number")
        _check(lv.clamp is None or (len(lv.clamp) == 2 and lv.clamp[0] < lv.clamp[1]), "langevin.clamp",
               "must be 'none' or 'lo, hi' with lo < hi")

        t = self.train
        _check(t.batch_size >= 1, "train.batch_size", "must be >= 1")
        _check(t.synthesis_size >= 1, "train.synthesis_size", "must be >= 1")
        _check(t.gamma >= 0, "train.gamma", "must be >= 0")
        _check(t.iterations >= 1, "train.iterations", "must be >= 1")
        _check(t.eval_every >= 1, "train.eval_every", "must be >= 1")
        _check(t.checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0")
        _check(t.teaching in TEACHING_MODES, "train.teaching", f"must be one of {TEACHING_MODES}")
        _check(t.init in INIT_MODES, "train.init", f"must be one of {INIT_MODES}")
        _check(t.teaching != "fast" or t.init == "ancestral", "train.init", "must be ancestral with fast teaching")
        _check(t.lr_schedule in LR_SCHEDULES, "train.lr_schedule", f"must be one of {LR_SCHEDULES}")
        _check(t.clip_norm is None or t.clip_norm > 0, "train.clip_norm", "must be 'none' or > 0")
        _check(t.weight_decay >= 0, "train.weight_decay", "must be >= 0")
        _check(t.estimator in ESTIMATORS, "train.estimator", f"must be one of {ESTIMATORS}")

        for section in ("adam_energy", "adam_generator", "adam_encoder"):
            try:
                getattr(self, section).to_adam()
            except ContractViolation as e:
                raise ConfigError(str(e), section.replace("_", ".")) from e

        g = self.grid
        _check(g.lo < g.hi, "grid.hi", "must be greater than grid.lo")
        _check(g.resolution >= 16, "grid.resolution", "must be >= 16")
        _check(g.bins >= 1, "grid.bins", "must be >= 1")

    def dtype(self) -> np.dtype:
        return np.dtype(self.experiment.precision)

    def data_dim(self) -> int:
        """D of the configured dataset: ``patch_size²`` for patches, 2 for the point clouds."""
        if self.dataset.kind == "patches":
            return self.dataset.patch_size ** 2
        return 2

    def cond_dim(self) -> int:
        """Width of the conditioning input: the first half of the coordinates for conditional runs."""
        return self.data_dim() // 2 if self.model.conditional else 0

    def latent_dim(self, data_dim: int) -> int:
        """Configured latent size, or ``min(200, max(2, 4·D))`` when left at 0."""
        if self.model.latent_dim:
            return self.model.latent_dim
        return min(MAX_LATENT_DIM, max(2, 4 * data_dim))

    def step_scale(self, data_dim: int) -> float:
        if self.langevin.step_scale == "auto":
            return float(np.sqrt(REFERENCE_DIM / data_dim))
        return float(self.langevin.step_scale)

    def effective_step_size(self, data_dim: int) -> float:
        """δ used by the sampler: ``langevin.step_size · step_scale``."""
        return self.langevin.step_size * self.step_scale(data_dim)

    def sampler_config(self, data_dim: int, steps: Optional[int] = None, noise: Optional[bool] = None,
                       keep_frames: Optional[bool] = None) -> SamplerConfig:
        lv = self.langevin
        return SamplerConfig(
            steps=lv.steps if steps is None else steps,
            step_size=self.effective_step_size(data_dim),
            noise_enabled=lv.noise if noise is None else noise,
            clamp_range=None if lv.clamp is None else (lv.clamp[0], lv.clamp[1]),
            seed=self.experiment.seed,
            keep_frames=lv.keep_frames if keep_frames is None else keep_frames,
        )

    def train_config(self, data_dim: int) -> TrainConfig:
        t = self.train
        return TrainConfig(
            batch_size=t.batch_size, synthesis_size=t.synthesis_size, sampler=self.sampler_config(data_dim),
            gamma=t.gamma, energy_adam=self.adam_energy.to_adam(), generator_adam=self.adam_generator.to_adam(),
            encoder_adam=self.adam_encoder.to_adam(), iterations=t.iterations, eval_every=t.eval_every,
            checkpoint_every=t.checkpoint_every, seed=self.experiment.seed, teaching=t.teaching, init=t.init,
            lr_schedule=t.lr_schedule, clip_norm=t.clip_norm, weight_decay=t.weight_decay, estimator=t.estimator,
        )

    def grid_spec(self, data_dim: int) -> GridSpec:
        g = self.grid
        return GridSpec.square(data_dim, g.lo, g.hi, g.resolution, g.bins)

    def output_path(self) -> Path:
        """``experiment.output_dir``, or ``$EBMTEACH_OUTPUT_ROOT/<name>`` (``runs/<name>`` by default)."""
        if self.experiment.output_dir:
            return Path(self.experiment.output_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)) / self.experiment.name


def _positive_number(text: str) -> bool:
    try:
        return float(text) > 0
    except ValueError:
        return False


def _check(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(message, key)
