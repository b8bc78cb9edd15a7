"""
File that contains the grid quadrature of energy models in one or two dimensions: the log
partition function, normalized node masses and histogram KL estimates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from autodiff.tensors import as_batch
from core.errors import ContractViolation
from core.models import EnergyModel

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 16
MAX_DIMS = 2


@dataclass(frozen=True)
class GridSpec:
    r"""
    Rectangular quadrature grid.

    :cvar bounds: (:class:`tuple`\[:class:`tuple`]) ``(lo, hi)`` per dimension.
    :cvar resolution: (:class:`tuple`\[:class:`int`]) Number of nodes per dimension, ``>= 16``.
    :cvar bins: (:class:`int`) Histogram bins per dimension used by sample-based KL estimates.
    """
    bounds: tuple[tuple[float, float], ...] = ((-4.0, 4.0), (-4.0, 4.0))
    resolution: tuple[int, ...] = (200, 200)
    bins: int = 32

    def __post_init__(self):
        if len(self.bounds) != len(self.resolution) or not self.bounds:
            raise ContractViolation(f"Grid needs one resolution per bound, got {self.bounds} and {self.resolution}")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ContractViolation(f"Grid bounds must be finite with lo < hi, got {(lo, hi)}")
        if min(self.resolution) < MIN_RESOLUTION:
            raise ContractViolation(f"Grid resolution must be >= {MIN_RESOLUTION}, got {self.resolution}")
        if self.bins < 1:
            raise ContractViolation(f"Histogram bins must be >= 1, got {self.bins}")

    @classmethod
    def square(cls, dims: int, lo: float = -4.0, hi: float = 4.0, resolution: int = 200, bins: int = 32) -> GridSpec:
        return cls(((lo, hi),) * dims, (resolution,) * dims, bins)

    @property
    def dims(self) -> int:
        return len(self.bounds)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.resolution)]

    def points(self) -> np.ndarray:
        """All nodes as a ``(N, dims)`` batch, first axis varying slowest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([axis.ravel() for axis in mesh], axis=1)

    def weights(self) -> np.ndarray:
        """Trapezoid weights of the nodes, shaped like the grid."""
        result = np.ones(())
        for axis in self.axes():
            w = np.full(axis.size, axis[1] - axis[0])
            w[[0, -1]] *= 0.5
            result = np.multiply.outer(result, w)
        return result

    def histogram_edges(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.bins + 1) for lo, hi in self.bounds]


def _check_support(m_dims: int, grid: GridSpec) -> None:
    if grid.dims > MAX_DIMS:
        raise ContractViolation(f"Grid quadrature supports at most {MAX_DIMS} dimensions, got {grid.dims}")
    if m_dims != grid.dims:
        raise ContractViolation(f"Model has {m_dims} data dimensions but the grid has {grid.dims}")


def _log_integral(log_values: np.ndarray, grid: GridSpec) -> float:
    """Log of the trapezoid integral of ``exp(log_values)`` over the grid, shifted for stability."""
    shift = float(np.max(log_values))
    integrand = np.exp(log_values - shift)
    for axis in reversed(grid.axes()):
        integrand = integrate.trapezoid(integrand, axis, axis=-1)
    return float(np.log(integrand)) + shift


def negative_energies(m: EnergyModel, grid: GridSpec, y=None) -> np.ndarray:
    """``-U_θ`` evaluated on every node, shaped like the grid."""
    _check_support(m.data_dim, grid)
    values = m.energies(grid.points(), y)
    return -np.asarray(values, dtype=np.float64).reshape(grid.resolution)


def grid_log_partition(m: EnergyModel, grid: GridSpec, y=None) -> float:
    """
    ``log Z(θ) = log ∫ exp(-U_θ(x)) dx`` by the trapezoid rule on ``grid``.

    :param m: (:class:`EnergyModel`) Energy with ``data_dim == grid.dims``.
    :param grid: (:class:`GridSpec`) One- or two-dimensional grid.
    :return: (:class:`float`)
    :raises ContractViolation: for grids with more than two dimensions.
    """
    return _log_integral(negative_energies(m, grid, y), grid)


def node_masses(log_values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Probability mass of every node: trapezoid weight times the normalized density, summing to 1."""
    log_masses = np.log(grid.weights()) + log_values
    return np.exp(log_masses - special.logsumexp(log_masses))


def model_masses(m: EnergyModel, grid: GridSpec, y=None) -> np.ndarray:
    """Node masses of the grid-normalized ``p_θ``."""
    return node_masses(negative_energies(m, grid, y), grid)


def grid_log_density(m: EnergyModel, grid: GridSpec, y=None) -> np.ndarray:
    """``log p_θ = -U_θ - log Z(θ)`` on every node."""
    log_values = negative_energies(m, grid, y)
    return log_values - _log_integral(log_values, grid)


def _bin_index(points: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Flat histogram cell of every point; points on the upper edge fall in the last cell."""
    index = np.zeros(points.shape[0], dtype=np.int64)
    for k, edges in enumerate(grid.histogram_edges()):
        cell = np.clip(np.searchsorted(edges, points[:, k], side="right") - 1, 0, grid.bins - 1)
        index = index * grid.bins + cell
    return index


def binned_model_masses(masses: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Aggregate node masses into the histogram cells of ``grid``."""
    return np.bincount(_bin_index(grid.points(), grid), weights=masses.ravel(),
                       minlength=grid.bins ** grid.dims)


def histogram_masses(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """
    Smoothed cell probabilities of a sample set: every cell count gets ``+1/2`` before normalization.
    Samples outside the grid bounds are dropped.
    """
    samples = as_batch(samples, grid.dims, np.float64, "samples")
    if samples.shape[0] == 0:
        raise ContractViolation("Histogram KL needs a non-empty sample set")
    inside = np.ones(samples.shape[0], dtype=bool)
    for k, (lo, hi) in enumerate(grid.bounds):
        inside &= (samples[:, k] >= lo) & (samples[:, k] <= hi)
    if not np.all(inside):
        logger.warning(f"{np.sum(~inside)} of {samples.shape[0]} samples fall outside the grid and are dropped")
    counts = np.bincount(_bin_index(samples[inside], grid), minlength=grid.bins ** grid.dims) + 0.5
    return counts / counts.sum()


def discrete_kl(p: np.ndarray, q: np.ndarray) -> float:
    """``Σ p·log(p/q)`` over the cells where ``p > 0``; ``q`` is floored at the smallest normal float."""
    p, q = np.ravel(p), np.maximum(np.ravel(q), np.finfo(np.float64).tiny)
    support = p > 0
    return max(0.0, float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support])))))


Reference = Union[np.ndarray, Sequence, Callable[[np.ndarray], np.ndarray]]


def grid_kl(reference: Reference, m: EnergyModel, grid: GridSpec, bins: Optional[int] = None, y=None) -> float:
    """
    ``KL(p || p_θ)`` against the grid-normalized energy model.

    A callable reference is a density evaluated on the nodes (it needs no normalization) and is
    compared node by node. A sample set is histogrammed into ``bins`` cells per dimension with
    add-one-half smoothing and compared with the model masses aggregated into the same cells.

    :param reference: Density function of a ``(N, dims)`` batch, or samples ``(n, dims)``.
    :param m: (:class:`EnergyModel`)
    :param grid: (:class:`GridSpec`)
    :param bins: (:class:`int`) Overrides ``grid.bins``.
    :return: (:class:`float`) Non-negative estimate.
    :raises ContractViolation: on an empty sample set or an unsupported grid.
    """
    masses = model_masses(m, grid, y)
    if callable(reference):
        density = np.asarray(reference(grid.points()), dtype=np.float64).reshape(grid.resolution)
        if np.any(density < 0) or not np.any(density > 0):
            raise ContractViolation("Reference density must be non-negative and not identically zero")
        with np.errstate(divide="ignore"):
            reference_masses = node_masses(np.log(density), grid)
        return discrete_kl(reference_masses, masses)
    if bins is not None:
        grid = GridSpec(grid.bounds, grid.resolution, bins)
    return discrete_kl(histogram_masses(np.asarray(reference, dtype=np.float64), grid),
                       binned_model_masses(masses, grid))
