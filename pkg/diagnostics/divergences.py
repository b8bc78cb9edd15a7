"""
File that contains the divergence diagnostics: closed-form Gaussian KLs, the equilibrium residuals
of the linear-Gaussian testbed and the divergence trajectories recorded during training.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.errors import ContractViolation, NonNormalizableError
from core.models import ModelSet
from core.testbed import GaussianTestbed, Gaussian, langevin_kernel_moments
from diagnostics.quadrature import (GridSpec, MAX_DIMS, binned_model_masses, discrete_kl, histogram_masses,
                                    model_masses)
from sampling.samplers import ancestral_sample

logger = logging.getLogger(__name__)


def gaussian_kl(mean_a, var_a, mean_b, var_b) -> float:
    """
    ``KL(N(mean_a, diag(var_a)) || N(mean_b, diag(var_b)))`` summed over the coordinates.

    :raises ContractViolation: unless every variance is positive.
    """
    mean_a, var_a, mean_b, var_b = (np.asarray(v, dtype=np.float64) for v in (mean_a, var_a, mean_b, var_b))
    if not (np.all(var_a > 0) and np.all(var_b > 0)):
        raise ContractViolation("Gaussian KL needs strictly positive variances")
    terms = np.log(var_b / var_a) + (var_a + (mean_a - mean_b) ** 2) / var_b - 1.0
    return max(0.0, 0.5 * float(np.sum(terms)))


def _kl(a: Gaussian, b: Gaussian) -> float:
    return gaussian_kl(a.mean, a.var, b.mean, b.var)


def expected_encoder_kl(testbed: GaussianTestbed, inputs: Gaussian) -> float:
    """
    ``E_{x ~ inputs}[KL(π_β(z|x) || q_α(z|x))]`` in closed form.

    Both conditionals are affine in x with constant variances, so only the first two moments of
    the input distribution enter.
    """
    posterior = testbed.generator.posterior()
    if posterior.var <= 0:
        raise NonNormalizableError("The generator posterior is degenerate (sigma = 0)")
    encoder = testbed.encoder
    w2 = encoder.w ** 2
    slope = encoder.u - posterior.gain
    offset = encoder.c - posterior.offset
    mean_square = (slope * inputs.mean + offset) ** 2 + slope ** 2 * inputs.var
    value = 0.5 * (np.log(posterior.var / w2) + (w2 + mean_square) / posterior.var - 1.0)
    return max(0.0, float(value))


@dataclass(frozen=True)
class NashResiduals:
    """
    Distances from the equilibrium triplet.

    :cvar r_theta: (:class:`float`) ``KL(p_data || p_θ)``.
    :cvar r_alpha: (:class:`float`) ``KL(M_θ q_α || q_α) + r_beta``.
    :cvar r_beta: (:class:`float`) Expected ``KL(π_β || q_α(z|x))`` over ``x ~ M_θ q_α``.
    """
    r_theta: float
    r_alpha: float
    r_beta: float

    def max(self) -> float:
        return max(self.r_theta, self.r_alpha, self.r_beta)


def nash_residuals(testbed: GaussianTestbed, data: Optional[Gaussian] = None, steps: int = 15,
                   delta: float = 0.002) -> NashResiduals:
    """
    Residuals of the three equilibrium conditions on the linear-Gaussian testbed.

    ``M_θ q_α`` is the generator marginal pushed through ``steps`` Langevin updates of size ``delta``
    in closed form. Small ``delta`` keeps the discretization bias of the kernel negligible.

    :param testbed: (:class:`GaussianTestbed`)
    :param data: (:class:`Gaussian`) Data distribution, defaults to the testbed's own.
    :return: (:class:`NashResiduals`)
    :raises NonNormalizableError: when p_θ or the posterior is degenerate.
    """
    data = data or testbed.data()
    p_theta = testbed.energy.density()
    q_alpha = testbed.generator.marginal()
    revised = langevin_kernel_moments(testbed.energy.theta1, testbed.energy.theta2, q_alpha.mean, q_alpha.var,
                                      steps, delta)
    r_beta = expected_encoder_kl(testbed, revised)
    residuals = NashResiduals(_kl(data, p_theta), _kl(revised, q_alpha) + r_beta, r_beta)
    logger.debug(f"Nash residuals: {residuals}")
    return residuals


COLUMNS = ("kl_data_energy", "kl_energy_generator", "kl_generator_energy", "kl_encoder_posterior")


@dataclass
class DivergenceTrace:
    r"""
    Iteration-indexed divergence series; ``None`` marks an entry that is unavailable for the run.

    :cvar iterations: (:class:`list`\[:class:`int`])
    :cvar values: (:class:`dict`) One list per column of :data:`COLUMNS`:
        ``KL(data || p_θ)``, ``KL(p_θ || q_α)``, ``KL(q_α || p_θ)`` and ``KL(π_β || posterior)``.
    :cvar mode: (:class:`str`) ``closed-form``, ``grid`` or ``unavailable`` for the latest row.
    """
    iterations: list[int] = field(default_factory=list)
    values: dict[str, list[Optional[float]]] = field(default_factory=lambda: {c: [] for c in COLUMNS})
    mode: str = "unavailable"

    def append(self, iteration: int, row: dict[str, Optional[float]]) -> None:
        for name, value in row.items():
            if name not in COLUMNS:
                raise ContractViolation(f"Unknown divergence column {name!r}")
            if value is not None and value < 0:
                raise ContractViolation(f"Divergence {name} = {value} is negative")
        self.iterations.append(iteration)
        for name in COLUMNS:
            self.values[name].append(row.get(name))

    def tail(self) -> dict[str, Optional[float]]:
        """Latest row, every entry ``None`` for an empty trace."""
        return {name: (series[-1] if series else None) for name, series in self.values.items()}

    def series(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Iterations and values of the available entries of column ``name``."""
        pairs = [(t, v) for t, v in zip(self.iterations, self.values[name]) if v is not None]
        if not pairs:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        steps, values = zip(*pairs)
        return np.asarray(steps), np.asarray(values, dtype=np.float64)

    def __len__(self):
        return len(self.iterations)


def _closed_form_row(testbed: GaussianTestbed) -> dict[str, Optional[float]]:
    row: dict[str, Optional[float]] = dict.fromkeys(COLUMNS)
    try:
        p_theta = testbed.energy.density()
    except NonNormalizableError:
        logger.warning(f"theta2 = {testbed.energy.theta2} <= 0, energy divergences unavailable")
        p_theta = None
    q_alpha = testbed.generator.marginal()
    if p_theta is not None:
        row["kl_data_energy"] = _kl(testbed.data(), p_theta)
        row["kl_energy_generator"] = _kl(p_theta, q_alpha)
        row["kl_generator_energy"] = _kl(q_alpha, p_theta)
    if testbed.generator.sigma > 0:
        row["kl_encoder_posterior"] = expected_encoder_kl(testbed, q_alpha)
    return row


def _grid_row(models: ModelSet, data: np.ndarray, grid: GridSpec, samples: int, seed: int) -> dict:
    masses = binned_model_masses(model_masses(models.energy, grid), grid)
    _, generated = ancestral_sample(models.generator, samples, seed)
    generated_masses = histogram_masses(generated, grid)
    row = dict.fromkeys(COLUMNS)
    row["kl_data_energy"] = discrete_kl(histogram_masses(data, grid), masses)
    row["kl_energy_generator"] = discrete_kl(masses, generated_masses)
    row["kl_generator_energy"] = discrete_kl(generated_masses, masses)
    return row


def divergence_trace_update(trace: DivergenceTrace, iteration: int, models: Optional[ModelSet] = None,
                            data=None, grid: Optional[GridSpec] = None,
                            testbed: Optional[GaussianTestbed] = None, samples: int = 5000,
                            seed: int = 0) -> DivergenceTrace:
    """
    Append the current divergences to ``trace``.

    The testbed gives every entry in closed form. Neural models in at most two dimensions get
    histogram estimates on ``grid`` (the encoder entry stays unavailable). Anything else appends an
    all-unavailable row. Failures are logged and recorded as unavailable entries.

    :param iteration: (:class:`int`) Iteration the row belongs to.
    :param samples: (:class:`int`) Number of ancestral samples used for the generator histogram.
    :return: (:class:`DivergenceTrace`) The updated ``trace``.
    """
    row: dict = dict.fromkeys(COLUMNS)
    mode = "unavailable"
    try:
        if testbed is not None:
            row, mode = _closed_form_row(testbed), "closed-form"
        elif models is not None and data is not None and grid is not None and models.energy.data_dim <= MAX_DIMS \
                and models.cond_dim == 0:
            row, mode = _grid_row(models, np.asarray(data), grid, samples, seed), "grid"
    except (ContractViolation, NonNormalizableError, FloatingPointError) as e:
        logger.warning(f"Divergences unavailable at iteration {iteration}: {e}")
        row, mode = dict.fromkeys(COLUMNS), "unavailable"
    trace.mode = mode
    trace.append(iteration, row)
    return trace
