"""
File that contains finite-difference checks of the reverse-mode gradients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from autodiff.network import DenseNet
from core.errors import ContractViolation

logger = logging.getLogger(__name__)

# Denominator floor of the relative error; keeps near-zero gradients from blowing it up.
ERROR_FLOOR = 1e-3


def central_difference(func: Callable[[np.ndarray], float], point, h: float) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function.

    :param func: Scalar function of a flat vector.
    :param point: Flat vector at which to differentiate.
    :param h: (:class:`float`) Step, must be positive.
    :return: (:class:`numpy.ndarray`) Gradient estimate with the shape of ``point``.
    """
    if h <= 0:
        raise ContractViolation(f"Finite-difference step must be positive, got {h}")
    point = np.array(point, dtype=np.float64, copy=True)
    grad = np.zeros_like(point)
    flat, out = point.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = func(point)
        flat[i] = original - h
        lower = func(point)
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor: float = ERROR_FLOOR) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


@dataclass
class GradientReport:
    r"""
    Result of :func:`finite_diff_check`.

    :cvar param_errors: (:class:`dict`\[:class:`str`, :class:`float`]) Max relative error per parameter.
    :cvar input_error: (:class:`float`) Max relative error of the input gradient.
    :cvar tolerance: (:class:`float`) Threshold the errors were compared against.
    """
    param_errors: dict[str, float] = field(default_factory=dict)
    input_error: float = 0.0
    tolerance: float = 0.0

    @property
    def max_error(self) -> float:
        return max([self.input_error, *self.param_errors.values()])

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def finite_diff_check(net: DenseNet, x, h: float = 1e-5, tol: float = 1e-4,
                      upstream=None) -> GradientReport:
    """
    Compare :meth:`DenseNet.grad_params` and :meth:`DenseNet.grad_input` with central differences.

    The network parameters are restored before returning.

    :param net: (:class:`DenseNet`) Network under test.
    :param x: Input batch.
    :param h: (:class:`float`) Finite-difference step.
    :param tol: (:class:`float`) Pass threshold on the max relative error (strict).
    :param upstream: Cotangent; defaults to all ones.
    :return: (:class:`GradientReport`)
    """
    if h <= 0:
        raise ContractViolation(f"Finite-difference step must be positive, got {h}")
    x = np.asarray(x, dtype=net.dtype)
    output = net.forward(x)
    upstream = np.ones_like(output) if upstream is None else np.asarray(upstream, dtype=net.dtype)
    analytic_params, analytic_input = net.backward(x, upstream)

    saved = net.params.flatten()

    def objective_params(vector: np.ndarray) -> float:
        net.params.assign(net.params.unflatten(vector))
        return float(np.sum(upstream * net.forward(x)))

    def objective_input(point: np.ndarray) -> float:
        return float(np.sum(upstream * net.forward(point)))

    try:
        numeric_flat = central_difference(objective_params, saved, h)
        net.params.assign(net.params.unflatten(saved))
        numeric_params = net.params.unflatten(numeric_flat)
        numeric_input = central_difference(objective_input, x, h)
    finally:
        net.params.assign(net.params.unflatten(saved))
        net.forward(x)

    report = GradientReport(
        param_errors={k: relative_error(analytic_params[k], numeric_params[k]) for k in analytic_params},
        input_error=relative_error(analytic_input, numeric_input),
        tolerance=tol,
    )
    logger.debug(f"Gradient check on {net}: max error {report.max_error:.3e}, passed={report.passed}")
    return report
