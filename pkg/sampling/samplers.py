"""
Describes the samplers: ancestral sampling from the generator, Langevin revision under the
energy, their composition and the noise-free predictive variant.

The Langevin update follows ``x_{t+1} = x_t - (δ²/2)·∂U/∂x + δ·ε``: drift coefficient δ²/2 and
noise std δ, not the ``sqrt(2·stepsize)`` convention used by many score-based samplers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from autodiff.tensors import as_batch, as_tensor
from core.errors import ContractViolation, DivergedChainError
from core.models import EnergyModel, GeneratorModel
from sampling import streams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    r"""
    Langevin hyperparameters.

    :cvar steps: (:class:`int`) Number of Langevin steps l, ``>= 0``.
    :cvar step_size: (:class:`float`) Effective step size δ, ``> 0``.
    :cvar noise_enabled: (:class:`bool`) ``False`` gives the noise-disabled (predictive) dynamics.
    :cvar clamp_range: (:class:`Optional`\[:class:`tuple`]) ``(lo, hi)`` applied after every step.
    :cvar seed: (:class:`int`) Non-negative 64-bit seed.
    :cvar keep_frames: (:class:`bool`) Retain every intermediate batch.
    """
    steps: int = 15
    step_size: float = 0.002
    noise_enabled: bool = True
    clamp_range: tuple[float, float] | None = None
    seed: int = 0
    keep_frames: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ContractViolation(f"Langevin steps must be >= 0, got {self.steps}")
        if not self.step_size > 0:
            raise ContractViolation(f"Langevin step size must be > 0, got {self.step_size}")
        if self.clamp_range is not None and not self.clamp_range[0] < self.clamp_range[1]:
            raise ContractViolation(f"Clamp range must satisfy lo < hi, got {self.clamp_range}")
        if self.seed < 0:
            raise ContractViolation(f"Seed must be non-negative, got {self.seed}")

    def with_seed(self, seed: int) -> SamplerConfig:
        return SamplerConfig(self.steps, self.step_size, self.noise_enabled, self.clamp_range, seed,
                             self.keep_frames)


@dataclass
class ChainRecord:
    r"""
    Outcome of a batch of Langevin chains.

    :cvar initial: (:class:`numpy.ndarray`) Starting batch x̂, ``(B, D)``.
    :cvar final: (:class:`numpy.ndarray`) Revised batch x̃, ``(B, D)``.
    :cvar energy_trace: (:class:`list`\[:class:`float`]) Mean energy of the initial state and after every step.
    :cvar frames: (:class:`Optional`\[:class:`list`]) ``l + 1`` batches when frames are retained.
    :cvar latents: (:class:`Optional`\[:class:`numpy.ndarray`]) ẑ when the chain started from ancestral samples.
    """
    initial: np.ndarray
    final: np.ndarray
    energy_trace: list[float] = field(default_factory=list)
    frames: list[np.ndarray] | None = None
    latents: np.ndarray | None = None

    @property
    def energy_gap(self) -> float:
        """Mean energy of the initial batch minus mean energy of the final batch."""
        return self.energy_trace[0] - self.energy_trace[-1]


def ancestral_sample(g: GeneratorModel, batch: int, seed: int, y=None) -> tuple[np.ndarray, np.ndarray]:
    """
    ``ẑ ~ N(0, I_d)`` and ``x̂ = g_α(ẑ) + σ·ε``.

    :param g: (:class:`GeneratorModel`) Generator.
    :param batch: (:class:`int`) Number of samples, ``>= 1``.
    :param seed: (:class:`int`) Seed; equal seeds give identical outputs.
    :param y: Optional conditioning batch.
    :return: (:class:`tuple`) ``(ẑ, x̂)`` of shapes ``(B, d)`` and ``(B, D)``.
    """
    if batch < 1:
        raise ContractViolation(f"Batch must be >= 1, got {batch}")
    rng = streams.stream(seed, streams.ANCESTRAL)
    z = rng.standard_normal((batch, g.latent_dim)).astype(g.dtype)
    noise = rng.standard_normal((batch, g.data_dim)).astype(g.dtype)
    return z, g.generate(z, noise, y)


def langevin_step(m: EnergyModel, x, delta: float, noise=None, y=None, step: int = 0) -> np.ndarray:
    """
    One update ``x - (δ²/2)·∂U/∂x + δ·noise``; ``noise=None`` drops the noise term.

    :param m: (:class:`EnergyModel`) Energy.
    :param x: Current batch ``(B, D)`` (or a single point).
    :param delta: (:class:`float`) Step size δ.
    :param noise: Standard normal draw with the shape of ``x``, or ``None``.
    :param step: (:class:`int`) Step index reported if the chain diverges.
    :raises DivergedChainError: when the gradient or the new state is not finite.
    """
    single = np.ndim(x) == 1
    x = as_batch(x, m.data_dim, m.dtype, "Langevin state")
    with np.errstate(over="ignore", invalid="ignore"):
        grad = m.grad_x(x, y)
        if not np.all(np.isfinite(grad)):
            raise DivergedChainError(step, "non-finite energy gradient")
        updated = x - 0.5 * delta ** 2 * grad
        if noise is not None:
            updated = updated + delta * np.reshape(noise, x.shape)
    if not np.all(np.isfinite(updated)):
        raise DivergedChainError(step)
    return updated[0] if single else updated


def langevin_chain(m: EnergyModel, x0, cfg: SamplerConfig, y=None) -> ChainRecord:
    """
    Run ``cfg.steps`` Langevin updates from ``x0``.

    Chain ``i`` draws its noise from its own stream, so a batch is the same set of chains
    whatever its size.

    :param m: (:class:`EnergyModel`) Energy.
    :param x0: Initial batch ``(B, D)``.
    :param cfg: (:class:`SamplerConfig`)
    :return: (:class:`ChainRecord`)
    """
    x = as_batch(x0, m.data_dim, m.dtype, "initial batch")
    initial = x.copy()
    noise = streams.chain_noise(cfg.seed, x.shape[0], cfg.steps, m.data_dim, m.dtype) \
        if cfg.noise_enabled else None
    trace = [float(np.mean(m.energies(x, y)))]
    frames = [initial.copy()] if cfg.keep_frames else None

    for t in range(cfg.steps):
        x = langevin_step(m, x, cfg.step_size, None if noise is None else noise[t], y, step=t)
        if cfg.clamp_range is not None:
            x = np.clip(x, *cfg.clamp_range)
        trace.append(float(np.mean(m.energies(x, y))))
        if frames is not None:
            frames.append(x.copy())

    logger.debug(f"Langevin chain: {cfg.steps} steps, energy {trace[0]:.4f} -> {trace[-1]:.4f}")
    return ChainRecord(initial=initial, final=x, energy_trace=trace, frames=frames)


def ancestral_langevin_sample(g: GeneratorModel, m: EnergyModel, batch: int, cfg: SamplerConfig,
                              y=None) -> ChainRecord:
    """
    Ancestral sampling followed by ``cfg.steps`` Langevin revisions.

    :return: (:class:`ChainRecord`) ``initial`` is x̂, ``final`` is x̃ and ``latents`` is ẑ.
    """
    z, x_hat = ancestral_sample(g, batch, cfg.seed, y)
    record = langevin_chain(m, x_hat, cfg, y)
    record.latents = z
    return record


def noise_initialized_sample(m: EnergyModel, batch: int, cfg: SamplerConfig, y=None) -> ChainRecord:
    """
    Langevin chains started from ``N(0, I_D)`` instead of the generator.
    """
    if batch < 1:
        raise ContractViolation(f"Batch must be >= 1, got {batch}")
    x0 = streams.stream(cfg.seed, streams.NOISE_INIT).standard_normal((batch, m.data_dim)).astype(m.dtype)
    return langevin_chain(m, x0, cfg, y)


def reparameterize(mu, v, eps) -> np.ndarray:
    """``mu + sqrt(v) ⊙ eps``; :raises ContractViolation: unless every variance is positive."""
    mu, v = np.asarray(mu), np.asarray(v)
    if not np.all(v > 0):
        raise ContractViolation("Variances must be strictly positive for a reparameterized draw")
    return mu + np.sqrt(v) * eps


def reparameterized_draw(mu, v, seed: int) -> np.ndarray:
    """
    ``z = mu + sqrt(v) ⊙ ε`` with ``ε ~ N(0, I)`` from the reparameterization stream of ``seed``.
    """
    mu = as_tensor(mu, name="mu")
    v = as_tensor(v, name="v")
    if mu.shape != v.shape:
        raise ContractViolation(f"mu {mu.shape} and v {v.shape} must have the same shape")
    eps = streams.stream(seed, streams.REPARAMETERIZATION).standard_normal(mu.shape)
    return reparameterize(mu, v, eps)


def predict(g: GeneratorModel, m: EnergyModel, y, cfg: SamplerConfig) -> np.ndarray:
    """
    Deterministic conditional prediction: ``x̂ = g_α(y, z* = 0)`` refined by noise-free Langevin on ``U_θ(x, y)``.

    :param y: Conditioning batch ``(B, C)``.
    :param cfg: (:class:`SamplerConfig`) Must have ``noise_enabled == False``.
    :return: (:class:`numpy.ndarray`) Predictions ``(B, D)``.
    """
    if cfg.noise_enabled:
        raise ContractViolation("predict() requires a sampler config with noise disabled")
    y = as_batch(y, g.cond_dim, g.dtype, "y")
    z_star = np.zeros((y.shape[0], g.latent_dim), dtype=g.dtype)
    x_hat = g.generate(z_star, None, y)
    return langevin_chain(m, x_hat, cfg, y).final
