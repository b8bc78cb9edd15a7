"""
File that describes the one-dimensional linear-Gaussian testbed.

All three models have closed forms here:

* energy ``U_θ(x) = θ2·x²/2 - θ1·x``, so ``p_θ = N(θ1/θ2, 1/θ2)`` when θ2 > 0,
* generator ``x = a·z + b + σ·ε``, so ``q_α = N(b, a² + σ²)`` and the posterior is
  ``N(a(x - b)/(a² + σ²), σ²/(a² + σ²))``,
* encoder ``π_β(z|x) = N(u·x + c, w²)``, stored through ``log w`` to keep w positive.

The testbed models implement the same interfaces as the neural ones, so the sampler and
the trainer run on them unchanged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from autodiff.tensors import ParamStore
from core.errors import ContractViolation, NonNormalizableError
from core.models import EnergyModel, GeneratorModel, InferenceModel, ModelSet, LOG_2PI

logger = logging.getLogger(__name__)


def _scalar(value: float) -> np.ndarray:
    return np.array([float(value)], dtype=np.float64)


@dataclass(frozen=True)
class Gaussian:
    """
    One-dimensional normal distribution record.

    :cvar mean: (:class:`float`) Mean.
    :cvar var: (:class:`float`) Variance, non-negative.
    """
    mean: float
    var: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))


@dataclass(frozen=True)
class AffinePosterior:
    """
    Posterior family ``z | x ~ N(gain·x + offset, var)`` of the linear generator.
    """
    gain: float
    offset: float
    var: float

    def at(self, x: float) -> Gaussian:
        return Gaussian(self.gain * x + self.offset, self.var)


@dataclass(frozen=True)
class TestbedDensities:
    """
    Closed-form densities of a :class:`GaussianTestbed`.

    :cvar p_theta: (:class:`Gaussian`) The normalized energy-based model.
    :cvar q_alpha: (:class:`Gaussian`) Marginal of the generator.
    :cvar posterior: (:class:`AffinePosterior`) True posterior of the generator.
    :cvar data: (:class:`Gaussian`) Data distribution.
    """
    p_theta: Gaussian
    q_alpha: Gaussian
    posterior: AffinePosterior
    data: Gaussian


class QuadraticEnergy(EnergyModel):
    """
    ``U_θ(x) = θ2·x²/2 - θ1·x`` on the real line.
    """

    def __init__(self, theta1: float, theta2: float):
        self.params = ParamStore([("theta1", _scalar(theta1)), ("theta2", _scalar(theta2))])
        self.data_dim = 1
        self.cond_dim = 0

    @property
    def theta1(self) -> float:
        return float(self.params["theta1"][0])

    @property
    def theta2(self) -> float:
        return float(self.params["theta2"][0])

    def energies(self, x, y=None):
        x = self._join(x, y)[:, 0]
        return self.theta2 * x * x / 2.0 - self.theta1 * x

    def grad_x(self, x, y=None):
        return self.theta2 * self._join(x, y) - self.theta1

    def grad_params(self, x, weights, y=None):
        x = self._join(x, y)[:, 0]
        weights = np.asarray(weights, dtype=np.float64)
        return ParamStore([("theta1", _scalar(-np.sum(weights * x))),
                           ("theta2", _scalar(np.sum(weights * x * x) / 2.0))])

    def density(self) -> Gaussian:
        """:raises NonNormalizableError: when θ2 ≤ 0."""
        if self.theta2 <= 0:
            raise NonNormalizableError(f"theta2 = {self.theta2} <= 0, exp(-U) is not normalizable")
        return Gaussian(self.theta1 / self.theta2, 1.0 / self.theta2)


class LinearGenerator(GeneratorModel):
    """
    ``x = a·z + b + σ·ε``. σ = 0 is allowed (noiseless limit) for sampling and densities.
    """

    affine_in_latent = True

    def __init__(self, a: float, b: float, sigma: float):
        if sigma < 0:
            raise ContractViolation(f"sigma must be non-negative, got {sigma}")
        self.params = ParamStore([("a", _scalar(a)), ("b", _scalar(b))])
        self.sigma = float(sigma)
        self.latent_dim = 1
        self.data_dim = 1
        self.cond_dim = 0

    @property
    def a(self) -> float:
        return float(self.params["a"][0])

    @property
    def b(self) -> float:
        return float(self.params["b"][0])

    def means(self, z, y=None):
        return self.a * self._join(z, y) + self.b

    def backward(self, z, upstream, y=None):
        z = self._join(z, y)
        upstream = np.asarray(upstream, dtype=np.float64)
        grads = ParamStore([("a", _scalar(np.sum(upstream * z))), ("b", _scalar(np.sum(upstream)))])
        return grads, upstream * self.a

    def expected_log_conditional(self, x, mu, v, y=None):
        if self.sigma <= 0:
            raise ContractViolation("log q(x|z) needs sigma > 0")
        x = self._join(x, y)[:, 0]
        mu, v = np.asarray(mu)[:, 0], np.asarray(v)[:, 0]
        residual = x - self.a * mu - self.b
        return -0.5 * (LOG_2PI + 2.0 * np.log(self.sigma)) \
            - (residual ** 2 + self.a ** 2 * v) / (2.0 * self.sigma ** 2)

    def marginal(self) -> Gaussian:
        var = self.a ** 2 + self.sigma ** 2
        if var <= 0:
            raise NonNormalizableError("a = 0 and sigma = 0: the generator marginal is degenerate")
        return Gaussian(self.b, var)

    def posterior(self) -> AffinePosterior:
        total = self.marginal().var
        gain = self.a / total
        return AffinePosterior(gain, -gain * self.b, self.sigma ** 2 / total)


class LinearEncoder(InferenceModel):
    """
    ``π_β(z|x) = N(u·x + c, w²)`` with the parameters ``u``, ``c`` and ``log_w``.
    """

    def __init__(self, u: float, c: float, w: float):
        if w <= 0:
            raise ContractViolation(f"Encoder std w must be positive, got {w}")
        self.params = ParamStore([("u", _scalar(u)), ("c", _scalar(c)), ("log_w", _scalar(np.log(w)))])
        self.latent_dim = 1
        self.data_dim = 1
        self.cond_dim = 0

    @property
    def u(self) -> float:
        return float(self.params["u"][0])

    @property
    def c(self) -> float:
        return float(self.params["c"][0])

    @property
    def w(self) -> float:
        return float(np.exp(self.params["log_w"][0]))

    def moments(self, x, y=None):
        x = self._join(x, y)
        return self.u * x + self.c, np.full_like(x, self.w ** 2)

    def backward(self, x, d_mu, d_v, y=None):
        x = self._join(x, y)
        return ParamStore([("u", _scalar(np.sum(d_mu * x))),
                           ("c", _scalar(np.sum(d_mu))),
                           ("log_w", _scalar(np.sum(d_v) * 2.0 * self.w ** 2))])

    def conditional(self, x: float) -> Gaussian:
        return Gaussian(self.u * x + self.c, self.w ** 2)


@dataclass
class GaussianTestbed:
    """
    Linear-Gaussian instantiation of the data and the three models.

    :cvar data_mean: (:class:`float`) m*.
    :cvar data_std: (:class:`float`) s*, positive.
    :cvar energy: (:class:`QuadraticEnergy`)
    :cvar generator: (:class:`LinearGenerator`)
    :cvar encoder: (:class:`LinearEncoder`)
    """
    data_mean: float
    data_std: float
    energy: QuadraticEnergy
    generator: LinearGenerator
    encoder: LinearEncoder

    def __post_init__(self):
        if self.data_std <= 0:
            raise ContractViolation(f"Data std must be positive, got {self.data_std}")

    @classmethod
    def build(cls, data_mean: float, data_std: float, theta: tuple[float, float],
              generator: tuple[float, float, float], encoder: tuple[float, float, float]) -> GaussianTestbed:
        """
        :param theta: ``(θ1, θ2)``.
        :param generator: ``(a, b, σ)``.
        :param encoder: ``(u, c, w)``.
        """
        return cls(data_mean, data_std, QuadraticEnergy(*theta), LinearGenerator(*generator),
                   LinearEncoder(*encoder))

    @classmethod
    def nash_triplet(cls, data_mean: float, data_std: float, sigma: float = 0.3) -> GaussianTestbed:
        """
        The analytic equilibrium: ``p_θ = q_α = p_data`` and the encoder equals the true posterior.

        :raises ContractViolation: when ``sigma >= data_std`` (no ``a`` reproduces the data variance).
        """
        if not 0 < sigma < data_std:
            raise ContractViolation(f"Nash triplet needs 0 < sigma < data_std, got sigma={sigma}")
        var = data_std ** 2
        a = float(np.sqrt(var - sigma ** 2))
        gain = a / var
        return cls.build(data_mean, data_std,
                         theta=(data_mean / var, 1.0 / var),
                         generator=(a, data_mean, sigma),
                         encoder=(gain, -gain * data_mean, sigma / data_std))

    @classmethod
    def random(cls, data_mean: float, data_std: float, sigma: float = 0.3, seed: int = 0) -> GaussianTestbed:
        """Random initialization with θ2 > 0 so that the first Langevin chains are stable."""
        rng = np.random.default_rng(seed)
        return cls.build(data_mean, data_std,
                         theta=(rng.uniform(-1.0, 1.0), rng.uniform(0.5, 1.5)),
                         generator=(rng.uniform(0.5, 1.5), rng.uniform(-1.0, 1.0), sigma),
                         encoder=(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0))

    def models(self) -> ModelSet:
        return ModelSet(self.energy, self.generator, self.encoder)

    def data(self) -> Gaussian:
        return Gaussian(self.data_mean, self.data_std ** 2)

    def sample_data(self, n: int, seed: int = 0) -> np.ndarray:
        """``n`` draws from the data distribution, shape ``(n, 1)``."""
        rng = np.random.default_rng(seed)
        return rng.normal(self.data_mean, self.data_std, size=(n, 1))

    def densities(self) -> TestbedDensities:
        return testbed_densities(self)


def testbed_densities(testbed: GaussianTestbed) -> TestbedDensities:
    """
    Closed-form ``p_θ``, ``q_α``, the true posterior and the data distribution.

    :raises NonNormalizableError: when θ2 ≤ 0 or the generator marginal is degenerate.
    """
    return TestbedDensities(
        p_theta=testbed.energy.density(),
        q_alpha=testbed.generator.marginal(),
        posterior=testbed.generator.posterior(),
        data=testbed.data(),
    )


def langevin_kernel_moments(theta1: float, theta2: float, mean: float, var: float, steps: int,
                            delta: float, noise: bool = True) -> Gaussian:
    """
    Push ``N(mean, var)`` through ``steps`` Langevin updates on the quadratic energy.

    One step is the affine map ``x' = (1 - δ²θ2/2)·x + δ²θ1/2 + δ·ε``, so Gaussians stay Gaussian.

    :param theta1: (:class:`float`) θ1.
    :param theta2: (:class:`float`) θ2 (any sign; the map is affine regardless).
    :param noise: (:class:`bool`) Whether the ``δ·ε`` term is present.
    :return: (:class:`Gaussian`) Distribution after ``steps`` updates.
    """
    if steps < 0 or delta <= 0:
        raise ContractViolation(f"Need steps >= 0 and delta > 0, got {steps}, {delta}")
    contraction = 1.0 - delta ** 2 * theta2 / 2.0
    drift = delta ** 2 * theta1 / 2.0
    for _ in range(steps):
        mean = contraction * mean + drift
        var = contraction ** 2 * var + (delta ** 2 if noise else 0.0)
    return Gaussian(float(mean), float(var))
