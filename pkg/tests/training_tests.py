import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from scipy import stats

from autodiff import ParamStore
from cli.runner import TestbedSettings, run_testbed
from core.errors import ContractViolation
from core.models import build_neural_models
from core.testbed import GaussianTestbed, LinearEncoder
from datasets.synthetic import make_dataset, paired_dataset
from diagnostics.analysis import trend_test
from sampling.samplers import SamplerConfig, ancestral_langevin_sample
from storage.checkpoints import checkpoint_from_state, load_checkpoint, restore_state, save_checkpoint
from storage.metrics import read_metrics
from training.objectives import ebm_grad, kl_diag_gaussian_to_prior, regression_loss, vae_loss
from training.optim import AdamConfig, AdamState, adam_step, clip_by_global_norm
from training.trainer import TrainConfig, TrainState, conditional_train_iteration, train_iteration, train_loop

SLOW = os.environ.get("EBMTEACH_SLOW_TESTS") == "1"


def _tiny_models(seed=0, cond_dim=0):
    return build_neural_models(2, 2, 0.3, (8,), (8,), (8,), cond_dim=cond_dim, seed=seed)


def _tiny_config(**kwargs):
    settings = dict(batch_size=16, synthesis_size=16, sampler=SamplerConfig(steps=3, step_size=0.05),
                    iterations=6, eval_every=2)
    settings.update(kwargs)
    return TrainConfig(**settings)


def _ring(n=200):
    return make_dataset("gaussian_ring", modes=4, radius=0.7, std=0.05).generate(n, seed=0)


class EbmGradTestCase(unittest.TestCase):
    def test_quadratic_energy_gradient(self):
        testbed = GaussianTestbed.build(0.0, 1.0, (0.0, 1.0), (1.0, 0.0, 0.3), (0.0, 0.0, 1.0))
        data = np.array([[1.0], [3.0]])
        samples = np.array([[0.0], [2.0]])
        grads = ebm_grad(testbed.energy, data, samples)
        self.assertAlmostEqual(-(2.0 - 1.0), grads["theta1"][0])
        self.assertAlmostEqual((5.0 - 2.0) / 2.0, grads["theta2"][0])

    def test_identical_batches_give_zero(self):
        m = _tiny_models().energy
        x = _ring(10)
        self.assertEqual(0.0, ebm_grad(m, x, x).norm())

    def test_weight_decay(self):
        m = _tiny_models().energy
        x = _ring(10)
        np.testing.assert_allclose(ebm_grad(m, x, x, weight_decay=0.1).flatten(), 0.1 * m.params.flatten())

    def test_energy_change_after_sampling_leaves_vae_gradients(self):
        models = _tiny_models()
        record = ancestral_langevin_sample(models.generator, models.energy, 16,
                                           SamplerConfig(steps=3, step_size=0.05).with_seed(2))
        data, samples = _ring(16), record.final.copy()
        energy_before = ebm_grad(models.energy, data, samples)
        vae_before = vae_loss(models.generator, models.encoder, samples, 2.0, seed=4)

        models.energy.params.assign(models.energy.params * 1.5)
        energy_after = ebm_grad(models.energy, data, samples)
        vae_after = vae_loss(models.generator, models.encoder, samples, 2.0, seed=4)

        self.assertNotEqual(energy_before, energy_after)
        self.assertEqual(vae_before.loss, vae_after.loss)
        self.assertEqual(vae_before.generator_grads, vae_after.generator_grads)
        self.assertEqual(vae_before.encoder_grads, vae_after.encoder_grads)

    def test_empty_batch_rejected(self):
        with self.assertRaises(ContractViolation):
            ebm_grad(_tiny_models().energy, np.zeros((0, 2)), np.zeros((3, 2)))


class VaeLossTestCase(unittest.TestCase):
    def test_kl_to_prior(self):
        self.assertEqual(0.0, kl_diag_gaussian_to_prior([0.0, 0.0], [1.0, 1.0]))
        self.assertAlmostEqual(0.5 * (4.0 - 1.0 - np.log(4.0)), kl_diag_gaussian_to_prior([0.0], [4.0]))
        with self.assertRaises(ContractViolation):
            kl_diag_gaussian_to_prior([0.0], [0.0])

    def test_loss_is_seeded(self):
        models = _tiny_models()
        x = _ring(20)
        a = vae_loss(models.generator, models.encoder, x, 2.0, seed=3)
        b = vae_loss(models.generator, models.encoder, x, 2.0, seed=3)
        self.assertEqual(a.loss, b.loss)
        self.assertAlmostEqual(a.loss, a.reconstruction + 2.0 * a.kl)

    def test_gamma_zero_ignores_kl(self):
        models = _tiny_models()
        loss = vae_loss(models.generator, models.encoder, _ring(20), 0.0, seed=3)
        self.assertAlmostEqual(loss.reconstruction, loss.loss)

    def test_analytic_estimator_needs_affine_generator(self):
        models = _tiny_models()
        with self.assertRaises(ContractViolation):
            vae_loss(models.generator, models.encoder, _ring(4), 1.0, seed=0, estimator="analytic")
        with self.assertRaises(ContractViolation):
            vae_loss(models.generator, models.encoder, _ring(4), 1.0, seed=0, estimator="exact")

    def test_analytic_loss_is_exact_nll_at_the_equilibrium(self):
        testbed = GaussianTestbed.nash_triplet(0.5, 0.8, 0.3)
        x = testbed.sample_data(50, seed=2)
        loss = vae_loss(testbed.generator, testbed.encoder, x, 1.0, seed=0, estimator="analytic")
        marginal = testbed.generator.marginal()
        nll = -np.mean(stats.norm(marginal.mean, marginal.std).logpdf(x[:, 0]))
        self.assertAlmostEqual(nll, loss.loss, places=9)

    def test_elbo_bounds_the_marginal_likelihood(self):
        rng = np.random.default_rng(7)
        for rep in range(1000):
            a = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0)
            generator = (a, rng.uniform(-1.0, 1.0), rng.uniform(0.2, 1.0))
            encoder = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.1, 2.0))
            testbed = GaussianTestbed.build(0.0, 1.0, (0.0, 1.0), generator, encoder)
            g = testbed.generator
            x = rng.normal(g.b, 1.5, size=(10, 1))
            marginal = g.marginal()
            nll = -np.mean(stats.norm(marginal.mean, marginal.std).logpdf(x[:, 0]))

            loss = vae_loss(g, testbed.encoder, x, 1.0, seed=rep, estimator="analytic").loss
            self.assertGreaterEqual(loss, nll - 1e-12)

            posterior = g.posterior()
            exact = LinearEncoder(posterior.gain, posterior.offset, np.sqrt(posterior.var))
            tight = vae_loss(g, exact, x, 1.0, seed=rep, estimator="analytic").loss
            self.assertLess(abs(tight - nll), 1e-8)

    def test_analytic_gradients_match_finite_differences(self):
        testbed = GaussianTestbed.build(0.0, 1.0, (0.0, 1.0), (1.3, 0.2, 0.4), (0.3, -0.1, 0.7))
        x = testbed.sample_data(8, seed=5)
        g, e = testbed.generator, testbed.encoder
        analytic = vae_loss(g, e, x, 2.0, seed=0, estimator="analytic")
        for store, grads in ((g.params, analytic.generator_grads), (e.params, analytic.encoder_grads)):
            for name in store:
                saved = store[name].copy()
                store[name] = saved + 1e-6
                upper = vae_loss(g, e, x, 2.0, seed=0, estimator="analytic").loss
                store[name] = saved - 1e-6
                lower = vae_loss(g, e, x, 2.0, seed=0, estimator="analytic").loss
                store[name] = saved
                self.assertAlmostEqual((upper - lower) / 2e-6, grads[name][0], places=5, msg=name)

    def test_regression_loss_gradient_sign(self):
        models = _tiny_models()
        g = models.generator
        z = np.zeros((4, 2))
        x = g.generate(z) + 0.1
        loss, grads = regression_loss(g, z, x)
        # moving against the gradient lowers the loss
        g.params.assign(g.params - grads * 1e-3)
        self.assertLess(regression_loss(g, z, x)[0], loss)


class AdamTestCase(unittest.TestCase):
    def test_first_step_moves_by_lr(self):
        params = ParamStore([("w", np.array([1.0, -1.0]))])
        state = AdamState.for_params(params)
        adam_step(params, ParamStore([("w", np.array([3.0, -0.5]))]), state, lr=0.1)
        np.testing.assert_allclose(params["w"], [0.9, -0.9], rtol=1e-6)
        self.assertEqual(1, state.step)

    def test_minimizes_quadratic(self):
        params = ParamStore([("w", np.array([5.0]))])
        state = AdamState.for_params(params)
        for _ in range(2000):
            adam_step(params, params * 2.0, state, lr=0.05)
        self.assertLess(abs(params["w"][0]), 1e-2)

    def test_key_mismatch(self):
        params = ParamStore([("w", np.zeros(1))])
        with self.assertRaises(ContractViolation):
            adam_step(params, ParamStore([("v", np.zeros(1))]), AdamState.for_params(params), lr=0.1)

    def test_invalid_config(self):
        with self.assertRaises(ContractViolation):
            AdamConfig(beta1=1.0)

    def test_clip_by_global_norm(self):
        grads = ParamStore([("a", np.array([3.0])), ("b", np.array([4.0]))])
        self.assertAlmostEqual(1.0, clip_by_global_norm(grads, 1.0).norm())
        self.assertIs(grads, clip_by_global_norm(grads, None))
        self.assertIs(grads, clip_by_global_norm(grads, 10.0))


class TrainConfigTestCase(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ContractViolation):
            TrainConfig(gamma=-1.0)
        with self.assertRaises(ContractViolation):
            TrainConfig(teaching="fast", init="noise")
        with self.assertRaises(ContractViolation):
            TrainConfig(lr_schedule="cosine")

    def test_linear_schedule(self):
        cfg = TrainConfig(iterations=10, lr_schedule="linear")
        self.assertEqual(1.0, cfg.lr_scale(0))
        self.assertAlmostEqual(0.1, cfg.lr_scale(9))
        self.assertEqual(1.0, TrainConfig().lr_scale(500))


class TrainIterationTestCase(unittest.TestCase):
    def test_iteration_updates_all_models(self):
        models = _tiny_models()
        before = {name: store.copy() for name, store in models.param_stores().items()}
        state = TrainState.start(models, seed=0)
        report = train_iteration(state, _ring(16), _tiny_config(), seed=1)
        self.assertEqual(1, report.iteration)
        for name, store in models.param_stores().items():
            self.assertNotEqual(before[name], store, name)

    def test_fast_teaching_leaves_encoder_untouched(self):
        models = _tiny_models()
        encoder = models.encoder.params.copy()
        state = TrainState.start(models, seed=0)
        report = train_iteration(state, _ring(16), _tiny_config(teaching="fast"), seed=1)
        self.assertEqual(encoder, models.encoder.params)
        self.assertEqual(0.0, report.kl)

    def test_noise_initialized_chains(self):
        state = TrainState.start(_tiny_models(), seed=0)
        report = train_iteration(state, _ring(16), _tiny_config(init="noise"), seed=1)
        self.assertTrue(np.isfinite(report.vae_loss))

    def test_failed_iteration_updates_nothing(self):
        models = _tiny_models()
        before = {name: store.copy() for name, store in models.param_stores().items()}
        state = TrainState.start(models, seed=0)
        with mock.patch("training.trainer.vae_loss", side_effect=ContractViolation("VAE loss is not finite")):
            with self.assertRaises(ContractViolation):
                train_iteration(state, _ring(16), _tiny_config(), seed=1)
        self.assertEqual(0, state.iteration)
        for name, store in models.param_stores().items():
            self.assertEqual(before[name], store, name)
            self.assertEqual(0, state.optimizers[name].step, name)

    def test_unconditional_iteration_rejects_conditional_models(self):
        state = TrainState.start(_tiny_models(cond_dim=1), seed=0)
        with self.assertRaises(ContractViolation):
            train_iteration(state, _ring(16), _tiny_config(), seed=1)

    def test_conditional_iteration(self):
        y, x = paired_dataset(make_dataset("two_branch").generate(16, seed=0))
        state = TrainState.start(_tiny_models(cond_dim=1), seed=0)
        report = conditional_train_iteration(state, y, x, _tiny_config(), seed=1)
        self.assertEqual(1, state.iteration)
        self.assertTrue(np.isfinite(report.positive_energy))
        with self.assertRaises(ContractViolation):
            conditional_train_iteration(state, y[:3], x, _tiny_config(), seed=1)


class TrainLoopTestCase(unittest.TestCase):
    def test_callbacks_follow_eval_cadence(self):
        seen = []
        state = TrainState.start(_tiny_models(), seed=0)
        train_loop(state, _ring(), _tiny_config(iterations=5, eval_every=2), [lambda s, r: seen.append(r.iteration)])
        self.assertEqual([2, 4, 5], seen)

    def test_runs_are_deterministic(self):
        first, second = _tiny_models(), _tiny_models()
        train_loop(TrainState.start(first, seed=4), _ring(), _tiny_config())
        train_loop(TrainState.start(second, seed=4), _ring(), _tiny_config())
        for name, store in first.param_stores().items():
            self.assertEqual(store, second.param_stores()[name], name)

    def test_resumed_run_matches_uninterrupted_run(self):
        cfg = _tiny_config(iterations=6, checkpoint_every=3)
        uninterrupted = _tiny_models()
        train_loop(TrainState.start(uninterrupted, seed=2), _ring(), cfg)

        with tempfile.TemporaryDirectory() as tmp:
            interrupted = TrainState.start(_tiny_models(), seed=2)
            half = TrainConfig(**{**cfg.__dict__, "iterations": 3})
            train_loop(interrupted, _ring(), half,
                       checkpointer=lambda s: save_checkpoint(f"{tmp}/ckpt-{s.iteration}.bin",
                                                              checkpoint_from_state(s, "cfg")))
            paths = sorted(os.listdir(tmp))
            self.assertEqual(["ckpt-3.bin"], paths)
            resumed = restore_state(load_checkpoint(f"{tmp}/ckpt-3.bin"), _tiny_models(seed=9))
        train_loop(resumed, _ring(), cfg)

        for name, store in uninterrupted.param_stores().items():
            self.assertEqual(store, resumed.models.param_stores()[name], name)

    def test_abort_writes_checkpoint_and_reraises(self):
        written = []

        def failing(state, report):
            raise FloatingPointError("boom")

        state = TrainState.start(_tiny_models(), seed=0)
        with self.assertRaises(FloatingPointError):
            train_loop(state, _ring(), _tiny_config(), [failing], checkpointer=lambda s: written.append(s.iteration))
        self.assertEqual([2], written)

    def test_abort_inside_an_iteration_checkpoints_the_last_complete_one(self):
        reference = TrainState.start(_tiny_models(), seed=5)
        train_loop(reference, _ring(), _tiny_config(iterations=2))

        calls = []

        def third_call_fails(*args, **kwargs):
            calls.append(1)
            if len(calls) == 3:
                raise ContractViolation("VAE loss is not finite")
            return vae_loss(*args, **kwargs)

        written = []
        state = TrainState.start(_tiny_models(), seed=5)
        with mock.patch("training.trainer.vae_loss", third_call_fails):
            with self.assertRaises(ContractViolation):
                train_loop(state, _ring(), _tiny_config(), checkpointer=written.append)
        self.assertEqual([state], written)
        self.assertEqual(2, state.iteration)
        self.assertEqual(reference.rng.bit_generator.state, state.rng.bit_generator.state)
        for name, store in reference.models.param_stores().items():
            self.assertEqual(store, state.models.param_stores()[name], name)
            self.assertEqual(reference.optimizers[name].step, state.optimizers[name].step, name)

    def test_empty_dataset_rejected(self):
        with self.assertRaises(ContractViolation):
            train_loop(TrainState.start(_tiny_models(), seed=0), np.zeros((0, 2)), _tiny_config())


class EquilibriumDriftTestCase(unittest.TestCase):
    """At the analytic equilibrium every expected update direction vanishes."""

    def test_gradients_have_zero_mean(self):
        testbed = GaussianTestbed.nash_triplet(0.5, 0.8, 0.3)
        sampler = SamplerConfig(steps=15, step_size=0.002)
        rows = []
        for rep in range(200):
            data = testbed.sample_data(100, seed=10_000 + rep)
            record = ancestral_langevin_sample(testbed.generator, testbed.energy, 100, sampler.with_seed(rep))
            energy = ebm_grad(testbed.energy, data, record.final)
            vae = vae_loss(testbed.generator, testbed.encoder, record.final, 1.0, seed=rep)
            rows.append(np.concatenate([energy.flatten(), vae.generator_grads.flatten(), vae.encoder_grads.flatten()]))
        rows = np.asarray(rows)
        threshold = 0.01 / rows.shape[1]
        for k in range(rows.shape[1]):
            self.assertGreater(stats.ttest_1samp(rows[:, k], 0.0).pvalue, threshold, f"component {k}")

    def test_gradients_away_from_equilibrium_are_detected(self):
        testbed = GaussianTestbed.nash_triplet(0.5, 0.8, 0.3)
        testbed.generator.params["b"] = [2.0]
        sampler = SamplerConfig(steps=15, step_size=0.002)
        values = []
        for rep in range(50):
            data = testbed.sample_data(100, seed=rep)
            record = ancestral_langevin_sample(testbed.generator, testbed.energy, 100, sampler.with_seed(rep))
            values.append(ebm_grad(testbed.energy, data, record.final)["theta1"][0])
        self.assertGreater(np.mean(values), 1.0)
        self.assertLess(stats.ttest_1samp(values, 0.0).pvalue, 1e-6)

    def test_iterations_from_the_equilibrium_do_not_drift(self):
        testbed = GaussianTestbed.nash_triplet(0.5, 0.8, 0.3)
        adam = AdamConfig(lr=1e-3, beta1=0.0)
        cfg = TrainConfig(batch_size=100, synthesis_size=100, sampler=SamplerConfig(steps=15, step_size=0.002),
                          gamma=1.0, energy_adam=adam, generator_adam=adam, encoder_adam=adam, iterations=100)
        state = TrainState.start(testbed.models(), seed=0)

        def flat():
            return np.concatenate([store.flatten() for store in state.models.param_stores().values()])

        previous, deltas = flat(), []
        for rep in range(100):
            train_iteration(state, testbed.sample_data(100, seed=20_000 + rep), cfg, seed=rep)
            current = flat()
            deltas.append(current - previous)
            previous = current
        deltas = np.asarray(deltas)
        threshold = 0.01 / deltas.shape[1]
        for k in range(deltas.shape[1]):
            self.assertGreater(stats.ttest_1samp(deltas[:, k], 0.0).pvalue, threshold, f"component {k}")


@unittest.skipUnless(SLOW, "set EBMTEACH_SLOW_TESTS=1 to run the long training runs")
class TestbedConvergenceTestCase(unittest.TestCase):
    def test_testbed_reaches_the_data_distribution(self):
        for seed in (0, 3):
            with self.subTest(seed=seed), tempfile.TemporaryDirectory() as tmp:
                settings = TestbedSettings(data_mean=2.0, data_std=0.5, iterations=5000, seed=seed)
                summary = run_testbed(settings, tmp)
                theta1, theta2 = summary["theta"]
                self.assertLess(abs(theta1 / theta2 - 2.0), 0.05)
                self.assertLess(abs(1.0 / np.sqrt(theta2) - 0.5), 0.05)
                self.assertLess(summary["divergences"]["kl_data_energy"], 0.01)

                rows = read_metrics(Path(tmp) / "metrics.csv")
                for column in ("kl_generator_energy", "kl_encoder_posterior"):
                    steps = [row["iteration"] for row in rows if row[column] is not None]
                    values = [np.log(row[column] + 1e-12) for row in rows if row[column] is not None]
                    self.assertTrue(trend_test(values, steps).decreasing(), column)


if __name__ == '__main__':
    unittest.main()
