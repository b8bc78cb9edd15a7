"""
File that contains the self-test suite run by the ``check`` command: gradient oracles, quadrature,
the Langevin kernel, the equilibrium residuals and the tightness of the ELBO.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from autodiff.checks import central_difference, finite_diff_check, relative_error
from autodiff.network import DenseNet, LayerSpec
from core.models import NeuralEnergy, NeuralEncoder, NeuralGenerator, LOG_2PI
from core.testbed import GaussianTestbed, QuadraticEnergy, langevin_kernel_moments
from diagnostics.divergences import nash_residuals
from diagnostics.quadrature import GridSpec, grid_log_partition
from sampling.samplers import SamplerConfig, langevin_chain
from training.objectives import ebm_grad, vae_loss

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4
FD_STEP = 1e-5
NASH_TOLERANCE = 1e-10
ELBO_TOLERANCE = 1e-8


@dataclass(frozen=True)
class CheckResult:
    """
    :cvar name: (:class:`str`) Check identifier.
    :cvar passed: (:class:`bool`)
    :cvar detail: (:class:`str`) Measured quantity.
    """
    name: str
    passed: bool
    detail: str


def check_network_gradients(seed: int = 0, nets: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(nets):
        depth = int(rng.integers(1, 4))
        sizes = tuple(int(s) for s in rng.integers(1, 9, size=depth + 1))
        hidden = str(rng.choice(["relu", "tanh"]))
        net = DenseNet.initialize(LayerSpec(sizes, hidden, str(rng.choice(["identity", "tanh"]))), rng)
        report = finite_diff_check(net, rng.normal(size=(3, sizes[0])), FD_STEP, GRADIENT_TOLERANCE)
        worst = max(worst, report.max_error)
    return CheckResult("network-gradients", worst < GRADIENT_TOLERANCE, f"max relative error {worst:.2e}")


def _smooth_net(sizes: tuple[int, ...], rng: np.random.Generator, head: str = "identity") -> DenseNet:
    return DenseNet.initialize(LayerSpec(sizes, "tanh", head), rng)


def _store_check(params, analytic, objective: Callable[[], float]) -> float:
    saved = params.flatten()

    def at(vector):
        params.assign(params.unflatten(vector))
        return objective()

    try:
        numeric = central_difference(at, saved, FD_STEP)
    finally:
        params.assign(params.unflatten(saved))
    return relative_error(analytic.flatten(), numeric)


def check_ebm_gradient(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    m = NeuralEnergy(_smooth_net((2, 6, 1), rng), 2)
    data, samples = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
    analytic = ebm_grad(m, data, samples)
    error = _store_check(m.params, analytic, lambda: float(np.mean(m.energies(data)) - np.mean(m.energies(samples))))
    return CheckResult("ebm-gradient", error < GRADIENT_TOLERANCE, f"max relative error {error:.2e}")


def check_vae_gradient(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = NeuralGenerator(_smooth_net((2, 6, 2), rng, "tanh"), 2, 2, 0.3)
    e = NeuralEncoder(_smooth_net((2, 6, 4), rng), 2, 2)
    x = rng.uniform(-0.8, 0.8, size=(6, 2))
    result = vae_loss(g, e, x, 2.0, seed)
    error = max(_store_check(g.params, result.generator_grads, lambda: vae_loss(g, e, x, 2.0, seed).loss),
                _store_check(e.params, result.encoder_grads, lambda: vae_loss(g, e, x, 2.0, seed).loss))
    return CheckResult("vae-gradient", error < GRADIENT_TOLERANCE, f"max relative error {error:.2e}")


def check_partition() -> CheckResult:
    value = grid_log_partition(QuadraticEnergy(0.0, 1.0), GridSpec(((-8.0, 8.0),), (2000,)))
    error = abs(value - 0.5 * LOG_2PI)
    return CheckResult("partition-quadrature", error < 1e-4, f"|log Z - log sqrt(2 pi)| = {error:.2e}")


def check_langevin_kernel(seed: int = 0, chains: int = 4000) -> CheckResult:
    theta1, theta2, mean, var, steps, delta = 0.5, 1.0, -0.5, 0.25, 5, 0.5
    x0 = np.random.default_rng(seed).normal(mean, np.sqrt(var), size=(chains, 1))
    final = langevin_chain(QuadraticEnergy(theta1, theta2), x0, SamplerConfig(steps, delta, seed=seed)).final[:, 0]
    expected = langevin_kernel_moments(theta1, theta2, mean, var, steps, delta)
    mean_score = abs(final.mean() - expected.mean) / np.sqrt(expected.var / chains)
    var_score = abs(final.var(ddof=1) - expected.var) / (expected.var * np.sqrt(2.0 / (chains - 1)))
    return CheckResult("langevin-kernel", mean_score < 4 and var_score < 4,
                       f"mean z-score {mean_score:.2f}, variance z-score {var_score:.2f}")


def check_nash_residuals() -> CheckResult:
    residuals = nash_residuals(GaussianTestbed.nash_triplet(2.0, 0.5))
    return CheckResult("nash-residuals", residuals.max() < NASH_TOLERANCE, f"max residual {residuals.max():.2e}")


def check_elbo_tightness(seed: int = 0) -> CheckResult:
    testbed = GaussianTestbed.nash_triplet(2.0, 0.5)
    x = testbed.sample_data(64, seed)
    loss = vae_loss(testbed.generator, testbed.encoder, x, 1.0, seed, estimator="analytic").loss
    marginal = testbed.generator.marginal()
    nll = float(np.mean(0.5 * (LOG_2PI + np.log(marginal.var)) + (x[:, 0] - marginal.mean) ** 2 / (2 * marginal.var)))
    gap = loss - nll
    return CheckResult("elbo-tightness", abs(gap) < ELBO_TOLERANCE, f"loss - nll = {gap:.2e}")


def run_selfchecks(seed: int = 0) -> list[CheckResult]:
    """Run every check; a check that raises is reported as failed."""
    checks = [
        lambda: check_network_gradients(seed),
        lambda: check_ebm_gradient(seed),
        lambda: check_vae_gradient(seed),
        check_partition,
        lambda: check_langevin_kernel(seed),
        check_nash_residuals,
        lambda: check_elbo_tightness(seed),
    ]
    results = []
    for check in checks:
        try:
            result = check()
        except Exception as e:
            logger.exception("Self-check raised")
            result = CheckResult(getattr(check, "__name__", "check"), False, f"{type(e).__name__}: {e}")
        logger.info(f"{result.name}: {'ok' if result.passed else 'FAILED'} ({result.detail})")
        results.append(result)
    return results
