"""
File that describes the three probabilistic models trained together:

* the energy-based model ``p_θ(x) ∝ exp(-U_θ(x))``,
* the latent variable generator ``x = g_α(z) + σ·ε`` with prior ``z ~ N(0, I_d)``,
* the inference network ``π_β(z|x) = N(μ_β(x), diag(v_β(x)))``.

Every model optionally takes a conditioning input ``y`` that is concatenated to its
network input; with ``cond_dim == 0`` the models are unconditional.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from autodiff.network import DenseNet, LayerSpec
from autodiff.tensors import ParamStore, as_batch
from core.errors import ContractViolation

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
# Encoder log-variances are clipped to this magnitude so exp() stays positive and finite.
LOGVAR_LIMIT = 30.0


def _single(value, width: int) -> bool:
    return np.ndim(value) == 1 and np.shape(value)[0] == width


class _Conditioned:
    """Shared handling of the optional conditioning input."""

    cond_dim: int = 0
    dtype = np.float64

    def _join(self, inputs: np.ndarray, y) -> np.ndarray:
        if self.cond_dim == 0:
            if y is not None and np.size(y) != 0:
                raise ContractViolation("Unconditional model received a conditioning input")
            return inputs
        if y is None:
            raise ContractViolation(f"Conditional model needs y of width {self.cond_dim}")
        y = as_batch(y, self.cond_dim, self.dtype, "conditioning input")
        if y.shape[0] == 1 and inputs.shape[0] > 1:
            y = np.repeat(y, inputs.shape[0], axis=0)
        if y.shape[0] != inputs.shape[0]:
            raise ContractViolation(f"Batch sizes differ: {inputs.shape[0]} inputs vs {y.shape[0]} conditions")
        return np.concatenate([inputs, y], axis=1)


class EnergyModel(_Conditioned, ABC):
    """
    Abstract energy function ``U_θ``; low energy means high probability.
    """

    data_dim: int
    params: ParamStore

    @abstractmethod
    def energies(self, x: np.ndarray, y=None) -> np.ndarray:
        """
        Energies of a batch.

        :param x: (:class:`numpy.ndarray`) Batch of shape ``(B, D)``.
        :param y: Optional conditioning batch of shape ``(B, C)``.
        :return: (:class:`numpy.ndarray`) Shape ``(B,)``.
        """

    @abstractmethod
    def grad_x(self, x: np.ndarray, y=None) -> np.ndarray:
        """Per-example ``∂U/∂x`` of shape ``(B, D)``."""

    @abstractmethod
    def grad_params(self, x: np.ndarray, weights: np.ndarray, y=None) -> ParamStore:
        """``Σ_i weights_i ∂U(x_i)/∂θ``."""

    def energy(self, x, y=None):
        """
        Energy of a single point (returns a float) or of a batch (returns an array).
        """
        single = _single(x, self.data_dim)
        values = self.energies(as_batch(x, self.data_dim, self.dtype, "x"), y)
        return float(values[0]) if single else values


class GeneratorModel(_Conditioned, ABC):
    """
    Abstract latent variable model ``x = g_α(z) + σ·ε``.
    """

    latent_dim: int
    data_dim: int
    sigma: float
    params: ParamStore
    # True when g_α is affine in z, which makes the two-point ELBO estimator exact.
    affine_in_latent: bool = False

    @abstractmethod
    def means(self, z: np.ndarray, y=None) -> np.ndarray:
        """Deterministic outputs ``g_α(z)`` of shape ``(B, D)`` for a latent batch ``(B, d)``."""

    @abstractmethod
    def backward(self, z: np.ndarray, upstream: np.ndarray, y=None) -> tuple[ParamStore, np.ndarray]:
        """Gradients of ``<upstream, g_α(z)>`` with respect to α (batch-summed) and to ``z``."""

    def generate(self, z, noise=None, y=None):
        """
        ``g_α(z) + σ·noise``; with ``noise=None`` the deterministic mean ``g_α(z)``.

        :param z: Latent vector ``(d,)`` or batch ``(B, d)``.
        :param noise: Standard normal draw with the output's shape, or ``None``.
        """
        single = _single(z, self.latent_dim)
        out = self.means(as_batch(z, self.latent_dim, self.dtype, "z"), y)
        if noise is not None:
            noise = as_batch(noise, self.data_dim, self.dtype, "noise")
            if noise.shape != out.shape:
                raise ContractViolation(f"Noise shape {noise.shape} does not match output {out.shape}")
            out = out + self.sigma * noise
        return out[0] if single else out

    def log_conditional(self, x, z, y=None):
        """
        ``log q_α(x|z) = -D/2·log(2πσ²) - ||x - g_α(z)||² / (2σ²)``.
        """
        if self.sigma <= 0:
            raise ContractViolation("log q(x|z) needs sigma > 0")
        single = _single(x, self.data_dim)
        x = as_batch(x, self.data_dim, self.dtype, "x")
        z = as_batch(z, self.latent_dim, self.dtype, "z")
        if x.shape[0] != z.shape[0]:
            raise ContractViolation(f"Batch sizes differ: {x.shape[0]} vs {z.shape[0]}")
        residual = x - self.means(z, y)
        values = -0.5 * self.data_dim * (LOG_2PI + 2.0 * np.log(self.sigma)) \
            - np.sum(residual ** 2, axis=1) / (2.0 * self.sigma ** 2)
        return float(values[0]) if single else values


class InferenceModel(_Conditioned, ABC):
    """
    Abstract amortized posterior ``π_β(z|x) = N(μ_β(x), diag(v_β(x)))``.
    """

    latent_dim: int
    data_dim: int
    params: ParamStore

    @abstractmethod
    def moments(self, x: np.ndarray, y=None) -> tuple[np.ndarray, np.ndarray]:
        """Mean and strictly positive variance, both ``(B, d)``."""

    @abstractmethod
    def backward(self, x: np.ndarray, d_mu: np.ndarray, d_v: np.ndarray, y=None) -> ParamStore:
        """Gradient of ``<d_mu, μ> + <d_v, v>`` with respect to β (batch-summed)."""

    def infer(self, x, y=None):
        """
        :param x: Data vector ``(D,)`` or batch ``(B, D)``.
        :return: (:class:`tuple`) ``(mu, v)`` with the latent shape.
        """
        single = _single(x, self.data_dim)
        mu, v = self.moments(as_batch(x, self.data_dim, self.dtype, "x"), y)
        return (mu[0], v[0]) if single else (mu, v)


class NeuralEnergy(EnergyModel):
    """
    Energy given by a dense network ``R^{D+C} → R``.

    :param net: (:class:`DenseNet`) Network with output width 1.
    :param data_dim: (:class:`int`) D.
    :param cond_dim: (:class:`int`) C, 0 for an unconditional model.
    """

    def __init__(self, net: DenseNet, data_dim: int, cond_dim: int = 0):
        if net.spec.input_dim != data_dim + cond_dim or net.spec.output_dim != 1:
            raise ContractViolation(f"Energy net {net.spec.sizes} does not map R^{data_dim + cond_dim} to R")
        self.net = net
        self.data_dim = data_dim
        self.cond_dim = cond_dim
        self.dtype = net.dtype

    @property
    def params(self) -> ParamStore:
        return self.net.params

    def energies(self, x, y=None):
        return self.net.forward(self._join(x, y))[:, 0]

    def grad_x(self, x, y=None):
        inputs = self._join(x, y)
        out = self.net.forward(inputs)
        return self.net.grad_input(inputs, np.ones_like(out))[:, :self.data_dim]

    def grad_params(self, x, weights, y=None):
        inputs = self._join(x, y)
        self.net.forward(inputs)
        return self.net.grad_params(inputs, np.asarray(weights, dtype=self.dtype)[:, None])


class NeuralGenerator(GeneratorModel):
    """
    Generator given by a dense network ``R^{d+C} → R^D``.

    :param net: (:class:`DenseNet`) Generator network, usually with a tanh head.
    :param sigma: (:class:`float`) Observation noise std, fixed.
    """

    def __init__(self, net: DenseNet, latent_dim: int, data_dim: int, sigma: float, cond_dim: int = 0):
        if net.spec.input_dim != latent_dim + cond_dim or net.spec.output_dim != data_dim:
            raise ContractViolation(f"Generator net {net.spec.sizes} does not map "
                                    f"R^{latent_dim + cond_dim} to R^{data_dim}")
        if sigma <= 0:
            raise ContractViolation(f"Generator sigma must be positive, got {sigma}")
        self.net = net
        self.latent_dim = latent_dim
        self.data_dim = data_dim
        self.sigma = float(sigma)
        self.cond_dim = cond_dim
        self.dtype = net.dtype

    @property
    def params(self) -> ParamStore:
        return self.net.params

    def means(self, z, y=None):
        return self.net.forward(self._join(z, y))

    def backward(self, z, upstream, y=None):
        inputs = self._join(z, y)
        self.net.forward(inputs)
        grads, d_inputs = self.net.backward(inputs, upstream)
        return grads, d_inputs[:, :self.latent_dim]


class NeuralEncoder(InferenceModel):
    """
    Encoder whose network ``R^{D+C} → R^{2d}`` outputs the mean head and the log-variance head.
    """

    def __init__(self, net: DenseNet, data_dim: int, latent_dim: int, cond_dim: int = 0):
        if net.spec.input_dim != data_dim + cond_dim or net.spec.output_dim != 2 * latent_dim:
            raise ContractViolation(f"Encoder net {net.spec.sizes} does not map "
                                    f"R^{data_dim + cond_dim} to R^{2 * latent_dim}")
        self.net = net
        self.data_dim = data_dim
        self.latent_dim = latent_dim
        self.cond_dim = cond_dim
        self.dtype = net.dtype

    @property
    def params(self) -> ParamStore:
        return self.net.params

    def moments(self, x, y=None):
        out = self.net.forward(self._join(x, y))
        mu = out[:, :self.latent_dim]
        log_v = np.clip(out[:, self.latent_dim:], -LOGVAR_LIMIT, LOGVAR_LIMIT)
        return mu, np.exp(log_v)

    def backward(self, x, d_mu, d_v, y=None):
        inputs = self._join(x, y)
        out = self.net.forward(inputs)
        log_v = out[:, self.latent_dim:]
        inside = np.abs(log_v) < LOGVAR_LIMIT
        d_log_v = d_v * np.exp(np.clip(log_v, -LOGVAR_LIMIT, LOGVAR_LIMIT)) * inside
        return self.net.grad_params(inputs, np.concatenate([d_mu, d_log_v], axis=1))


@dataclass
class ModelSet:
    """
    The triplet trained by the joint algorithm.

    :cvar energy: (:class:`EnergyModel`) θ.
    :cvar generator: (:class:`GeneratorModel`) α.
    :cvar encoder: (:class:`InferenceModel`) β.
    """
    energy: EnergyModel
    generator: GeneratorModel
    encoder: InferenceModel

    def param_stores(self) -> dict[str, ParamStore]:
        return {"energy": self.energy.params, "generator": self.generator.params, "encoder": self.encoder.params}

    @property
    def cond_dim(self) -> int:
        return self.energy.cond_dim


def build_neural_models(data_dim: int, latent_dim: int, sigma: float,
                        energy_widths: Sequence[int] = (64, 64),
                        generator_widths: Sequence[int] = (64, 64),
                        encoder_widths: Sequence[int] = (64, 64),
                        cond_dim: int = 0, seed: int = 0, precision: str = "float64") -> ModelSet:
    """
    Initialize the three networks: ReLU energy and encoder, ReLU generator with a tanh head.

    :param data_dim: (:class:`int`) D.
    :param latent_dim: (:class:`int`) d.
    :param sigma: (:class:`float`) Generator observation noise.
    :param cond_dim: (:class:`int`) Width of the conditioning input, 0 for unconditional models.
    :param seed: (:class:`int`) Seed of the weight initialization.
    :return: (:class:`ModelSet`)
    """
    rng = np.random.default_rng(seed)
    energy_net = DenseNet.initialize(
        LayerSpec((data_dim + cond_dim, *energy_widths, 1), "relu", "identity"), rng, precision)
    generator_net = DenseNet.initialize(
        LayerSpec((latent_dim + cond_dim, *generator_widths, data_dim), "relu", "tanh"), rng, precision)
    encoder_net = DenseNet.initialize(
        LayerSpec((data_dim + cond_dim, *encoder_widths, 2 * latent_dim), "relu", "identity"), rng, precision)
    logger.debug(f"Built models: energy {energy_net}, generator {generator_net}, encoder {encoder_net}")
    return ModelSet(
        energy=NeuralEnergy(energy_net, data_dim, cond_dim),
        generator=NeuralGenerator(generator_net, latent_dim, data_dim, sigma, cond_dim),
        encoder=NeuralEncoder(encoder_net, data_dim, latent_dim, cond_dim),
    )
