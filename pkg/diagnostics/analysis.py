"""
File that contains sample-level diagnostics: mode coverage, latent interpolation, the energy gap
between initial and revised samples and a least-squares trend test.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from autodiff.tensors import as_batch, as_tensor
from core.errors import ContractViolation
from core.models import EnergyModel, GeneratorModel

logger = logging.getLogger(__name__)


def mode_coverage(samples, centers, radius: float) -> np.ndarray:
    """
    Fraction of samples within ``radius`` of each center; a sample counts for its nearest center only,
    so the fractions sum to at most 1.

    :param samples: ``(n, D)``.
    :param centers: ``(k, D)``, non-empty.
    :param radius: (:class:`float`) Positive radius.
    :return: (:class:`numpy.ndarray`) ``(k,)`` fractions.
    """
    centers = as_tensor(centers, name="centers")
    if centers.ndim != 2 or centers.shape[0] == 0:
        raise ContractViolation(f"Mode centers must be a non-empty (k, D) array, got shape {centers.shape}")
    if radius <= 0:
        raise ContractViolation(f"Coverage radius must be positive, got {radius}")
    samples = as_batch(samples, centers.shape[1], np.float64, "samples")
    if samples.shape[0] == 0:
        return np.zeros(centers.shape[0])
    distances = np.linalg.norm(samples[:, None, :] - centers[None, :, :], axis=2)
    nearest = np.argmin(distances, axis=1)
    hit = distances[np.arange(samples.shape[0]), nearest] <= radius
    return np.bincount(nearest[hit], minlength=centers.shape[0]) / samples.shape[0]


def interpolation_weights(steps: int) -> np.ndarray:
    """η on a uniform grid over [0, 1]."""
    if steps < 2:
        raise ContractViolation(f"Interpolation needs at least 2 steps, got {steps}")
    return np.linspace(0.0, 1.0, steps)


def latent_interpolate(g: GeneratorModel, z_left, z_right, steps: int = 8, y=None) -> np.ndarray:
    """
    Generator means along ``z_η = η·z_left + sqrt(1 - η²)·z_right`` for η from 0 to 1.

    The first row is ``g(z_right)`` and the last ``g(z_left)``.

    :return: (:class:`numpy.ndarray`) ``(steps, D)``.
    """
    z_left = as_tensor(z_left, g.dtype, "z_left")
    z_right = as_tensor(z_right, g.dtype, "z_right")
    if z_left.shape != (g.latent_dim,) or z_right.shape != (g.latent_dim,):
        raise ContractViolation(f"Interpolation endpoints must have shape ({g.latent_dim},), "
                                f"got {z_left.shape} and {z_right.shape}")
    eta = interpolation_weights(steps)[:, None]
    z = eta * z_left + np.sqrt(1.0 - eta ** 2) * z_right
    return g.generate(z, None, y)


def energy_gap(m: EnergyModel, x_initial, x_revised, y=None) -> float:
    """
    Mean ``U(x̂)`` minus mean ``U(x̃)``.

    :raises ContractViolation: on empty or unequal batches.
    """
    x_initial = as_batch(x_initial, m.data_dim, m.dtype, "initial samples")
    x_revised = as_batch(x_revised, m.data_dim, m.dtype, "revised samples")
    if x_initial.shape[0] == 0 or x_initial.shape != x_revised.shape:
        raise ContractViolation(f"Energy gap needs two equal non-empty batches, got {x_initial.shape} "
                                f"and {x_revised.shape}")
    return float(np.mean(m.energies(x_initial, y)) - np.mean(m.energies(x_revised, y)))


@dataclass(frozen=True)
class TrendResult:
    """
    Least-squares line through a series.

    :cvar slope: (:class:`float`) Fitted slope per unit of the abscissa.
    :cvar p_value: (:class:`float`) Two-sided p-value of a zero slope.
    """
    slope: float
    p_value: float

    def decreasing(self, alpha: float = 0.05) -> bool:
        """One-sided test of a negative slope at level ``alpha``."""
        return self.slope < 0 and self.p_value / 2.0 < alpha


def trend_test(values, steps=None) -> TrendResult:
    """
    Fit ``values ≈ a + slope·steps`` with :func:`scipy.stats.linregress`.

    :param values: Series of at least three finite values.
    :param steps: Abscissa, defaults to ``0..n-1``.
    """
    values = np.asarray(values, dtype=np.float64)
    steps = np.arange(values.size, dtype=np.float64) if steps is None else np.asarray(steps, dtype=np.float64)
    if values.size < 3 or steps.shape != values.shape:
        raise ContractViolation(f"Trend test needs at least 3 paired values, got {values.size}")
    fit = stats.linregress(steps, values)
    return TrendResult(float(fit.slope), float(fit.pvalue))
