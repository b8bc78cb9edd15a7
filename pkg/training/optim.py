"""
File that contains the Adam optimizer working on :class:`ParamStore` objects.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from autodiff.tensors import ParamStore
from core.errors import ContractViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    """
    Adam hyperparameters of one model.

    :cvar lr: (:class:`float`) Learning rate.
    :cvar beta1: (:class:`float`) First-moment decay.
    :cvar beta2: (:class:`float`) Second-moment decay.
    :cvar eps: (:class:`float`) Denominator offset.
    """
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or self.eps <= 0:
            raise ContractViolation(f"Invalid Adam settings {self}")


@dataclass
class AdamState:
    """
    Moment accumulators of one :class:`ParamStore`.

    :cvar m: (:class:`ParamStore`) First moments.
    :cvar v: (:class:`ParamStore`) Second moments.
    :cvar step: (:class:`int`) Number of updates applied.
    """
    m: ParamStore
    v: ParamStore
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamStore) -> AdamState:
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ParamStore, grads: ParamStore, state: AdamState, lr: float,
              beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    Bias-corrected Adam update applied to ``params`` in place; ``state.step`` is incremented.

    :param params: (:class:`ParamStore`) Parameters to descend.
    :param grads: (:class:`ParamStore`) Gradient of the objective, same keys and shapes.
    :param state: (:class:`AdamState`) Moments, updated in place.
    :raises ContractViolation: on a key or shape mismatch.
    """
    params.check_keys(grads)
    params.check_keys(state.m)
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name in params:
        g = np.asarray(grads[name], dtype=params[name].dtype)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] = params[name] - lr * (m / correction1) / (np.sqrt(v / correction2) + eps)


def apply_adam(params: ParamStore, grads: ParamStore, state: AdamState, cfg: AdamConfig,
               lr_scale: float = 1.0) -> None:
    """Shortcut for :func:`adam_step` with the settings of ``cfg``."""
    adam_step(params, grads, state, cfg.lr * lr_scale, cfg.beta1, cfg.beta2, cfg.eps)


def clip_by_global_norm(grads: ParamStore, max_norm: float | None) -> ParamStore:
    """
    Scale ``grads`` down so that their global norm is at most ``max_norm``; ``None`` disables clipping.
    """
    if max_norm is None:
        return grads
    norm = grads.norm()
    if norm <= max_norm or norm == 0:
        return grads
    logger.debug(f"Clipping gradient norm {norm:.4g} to {max_norm}")
    return grads * (max_norm / norm)
