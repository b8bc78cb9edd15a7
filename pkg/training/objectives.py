"""
File that contains the training objectives: the modified contrastive divergence gradient of the
energy model and the negative ELBO of the generator/encoder pair.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from autodiff.tensors import ParamStore, as_batch
from core.errors import ContractViolation
from core.models import EnergyModel, GeneratorModel, InferenceModel, LOG_2PI
from sampling import streams
from sampling.samplers import reparameterize

logger = logging.getLogger(__name__)

ESTIMATORS = ("reparameterized", "analytic")


def ebm_grad(m: EnergyModel, data, samples, weight_decay: float = 0.0,
             y_data=None, y_samples=None) -> ParamStore:
    """
    ``(1/n)Σ ∂U(x_i)/∂θ - (1/ñ)Σ ∂U(x̃_i)/∂θ``, plus ``weight_decay·θ`` when requested.

    Descending this direction lowers the energy of the data and raises the energy of the samples.

    :param m: (:class:`EnergyModel`) Energy model.
    :param data: Observed batch ``(n, D)``.
    :param samples: Revised samples ``(ñ, D)``; treated as constants.
    :param weight_decay: (:class:`float`) L2 coefficient on θ.
    :raises ContractViolation: if a batch is empty.
    """
    data = as_batch(data, m.data_dim, m.dtype, "data batch")
    samples = as_batch(samples, m.data_dim, m.dtype, "sample batch")
    if data.shape[0] == 0 or samples.shape[0] == 0:
        raise ContractViolation("ebm_grad needs non-empty data and sample batches")
    positive = m.grad_params(data, np.full(data.shape[0], 1.0 / data.shape[0]), y_data)
    negative = m.grad_params(samples, np.full(samples.shape[0], 1.0 / samples.shape[0]), y_samples)
    grads = positive - negative
    if weight_decay:
        grads = grads + m.params * weight_decay
    return grads


def kl_diag_gaussian_to_prior(mu, v):
    """
    ``KL(N(mu, diag(v)) || N(0, I)) = ½ Σ_j (v_j + mu_j² - 1 - log v_j)``.

    :param mu: Mean vector ``(d,)`` or batch ``(B, d)``.
    :param v: Variances with the same shape, strictly positive.
    :return: A float for a single vector, an array ``(B,)`` for a batch.
    """
    mu, v = np.asarray(mu, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if mu.shape != v.shape:
        raise ContractViolation(f"mu {mu.shape} and v {v.shape} must have the same shape")
    if not np.all(v > 0):
        raise ContractViolation("KL to prior needs strictly positive variances")
    values = 0.5 * np.sum(v + mu ** 2 - 1.0 - np.log(v), axis=-1)
    return float(values) if np.ndim(values) == 0 else values


@dataclass
class VaeLoss:
    """
    Negative ELBO averaged over the batch, with its parts and gradients.

    :cvar loss: (:class:`float`) ``reconstruction + γ·kl``.
    :cvar reconstruction: (:class:`float`) Mean ``-E_π[log q_α(x̃|z)]``.
    :cvar kl: (:class:`float`) Mean ``KL(π_β(z|x̃) || N(0, I))``.
    :cvar generator_grads: (:class:`ParamStore`) ``∂loss/∂α``.
    :cvar encoder_grads: (:class:`ParamStore`) ``∂loss/∂β``.
    """
    loss: float
    reconstruction: float
    kl: float
    generator_grads: ParamStore
    encoder_grads: ParamStore


def _single_draw(g: GeneratorModel, e: InferenceModel, x: np.ndarray, mu: np.ndarray, v: np.ndarray,
                 eps: np.ndarray, gamma: float, y) -> tuple[np.ndarray, ParamStore, ParamStore]:
    """Per-example reconstruction NLL and the gradients of the batch-mean loss for one ε."""
    batch = x.shape[0]
    sigma2 = g.sigma ** 2
    z = reparameterize(mu, v, eps)
    residual = x - g.means(z, y)
    reconstruction = 0.5 * g.data_dim * (LOG_2PI + np.log(sigma2)) + np.sum(residual ** 2, axis=1) / (2 * sigma2)

    generator_grads, d_z = g.backward(z, -residual / (sigma2 * batch), y)
    d_mu = d_z + gamma * mu / batch
    d_v = d_z * eps / (2.0 * np.sqrt(v)) + gamma * (1.0 - 1.0 / v) / (2.0 * batch)
    encoder_grads = e.backward(x, d_mu, d_v, y)
    return reconstruction, generator_grads, encoder_grads


def vae_loss(g: GeneratorModel, e: InferenceModel, samples, gamma: float, seed: int, y=None,
             estimator: str = "reparameterized") -> VaeLoss:
    """
    Negative ELBO ``-E_π[log q_α(x̃|z)] + γ·KL(π_β(z|x̃) || q(z))`` of the revised samples.

    ``reparameterized`` uses one draw ``z = μ + sqrt(v)·ε`` per example. ``analytic`` averages the
    two points ``ε = ±1``, which evaluates the expectation exactly when ``g`` is affine in a
    one-dimensional ``z``.

    :param g: (:class:`GeneratorModel`) Generator, parameters α.
    :param e: (:class:`InferenceModel`) Encoder, parameters β.
    :param samples: Revised samples x̃ ``(ñ, D)``, constants with respect to θ.
    :param gamma: (:class:`float`) Weight of the KL-to-prior term, ``>= 0``.
    :param seed: (:class:`int`) Seed of the reparameterization draw.
    :param estimator: (:class:`str`) ``reparameterized`` or ``analytic``.
    :return: (:class:`VaeLoss`)
    """
    if gamma < 0:
        raise ContractViolation(f"gamma must be >= 0, got {gamma}")
    if estimator not in ESTIMATORS:
        raise ContractViolation(f"Unknown estimator {estimator!r}, expected one of {ESTIMATORS}")
    if g.sigma <= 0:
        raise ContractViolation("The ELBO needs a generator with sigma > 0")
    x = as_batch(samples, g.data_dim, g.dtype, "VAE batch")
    if x.shape[0] == 0:
        raise ContractViolation("vae_loss needs a non-empty batch")

    mu, v = e.moments(x, y)
    if not np.all(v > 0):
        raise ContractViolation("Encoder produced a non-positive variance")
    kl = kl_diag_gaussian_to_prior(mu, v)

    if estimator == "analytic":
        if not (g.affine_in_latent and g.latent_dim == 1):
            raise ContractViolation("The analytic estimator needs a generator affine in a 1-D latent")
        draws = [np.ones_like(mu), -np.ones_like(mu)]
    else:
        draws = [streams.stream(seed, streams.REPARAMETERIZATION).standard_normal(mu.shape).astype(mu.dtype)]

    reconstruction, generator_grads, encoder_grads = 0.0, None, None
    for eps in draws:
        rec, g_grads, e_grads = _single_draw(g, e, x, mu, v, eps, gamma, y)
        reconstruction = reconstruction + rec / len(draws)
        scaled_g, scaled_e = g_grads * (1.0 / len(draws)), e_grads * (1.0 / len(draws))
        generator_grads = scaled_g if generator_grads is None else generator_grads + scaled_g
        encoder_grads = scaled_e if encoder_grads is None else encoder_grads + scaled_e

    loss = float(np.mean(reconstruction + gamma * kl))
    if not np.isfinite(loss):
        raise ContractViolation("VAE loss is not finite")
    return VaeLoss(loss, float(np.mean(reconstruction)), float(np.mean(kl)), generator_grads, encoder_grads)


def regression_loss(g: GeneratorModel, z, x, y=None) -> tuple[float, ParamStore]:
    """
    Mean ``-log q_α(x̃|ẑ)`` for the fast teaching variant, where the generator regresses the revised
    samples on the latents that produced them.

    :return: (:class:`tuple`) ``(loss, ∂loss/∂α)``.
    """
    if g.sigma <= 0:
        raise ContractViolation("The regression loss needs a generator with sigma > 0")
    x = as_batch(x, g.data_dim, g.dtype, "regression targets")
    z = as_batch(z, g.latent_dim, g.dtype, "latents")
    residual = x - g.means(z, y)
    sigma2 = g.sigma ** 2
    loss = float(np.mean(0.5 * g.data_dim * (LOG_2PI + np.log(sigma2)) + np.sum(residual ** 2, axis=1) / (2 * sigma2)))
    grads, _ = g.backward(z, -residual / (sigma2 * x.shape[0]), y)
    return loss, grads
