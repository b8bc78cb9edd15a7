import unittest

import numpy as np
from scipy import stats

from core.errors import ContractViolation, DivergedChainError
from core.models import build_neural_models
from core.testbed import GaussianTestbed, QuadraticEnergy, langevin_kernel_moments
from sampling import streams
from sampling.samplers import (SamplerConfig, ancestral_langevin_sample, ancestral_sample, langevin_chain,
                               langevin_step, noise_initialized_sample, predict, reparameterize,
                               reparameterized_draw)


class StreamsTestCase(unittest.TestCase):
    def test_streams_are_reproducible_and_distinct(self):
        a = streams.stream(5, streams.CHAIN, 0).standard_normal(4)
        b = streams.stream(5, streams.CHAIN, 0).standard_normal(4)
        c = streams.stream(5, streams.CHAIN, 1).standard_normal(4)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_negative_seed_rejected(self):
        with self.assertRaises(ContractViolation):
            streams.stream(-1)

    def test_chain_noise_does_not_depend_on_batch_size(self):
        small = streams.chain_noise(3, 2, 5, 2)
        large = streams.chain_noise(3, 6, 5, 2)
        np.testing.assert_array_equal(small, large[:, :2, :])


class SamplerConfigTestCase(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ContractViolation):
            SamplerConfig(steps=-1)
        with self.assertRaises(ContractViolation):
            SamplerConfig(step_size=0.0)

    def test_with_seed(self):
        cfg = SamplerConfig(steps=3, step_size=0.1, seed=1)
        self.assertEqual(9, cfg.with_seed(9).seed)
        self.assertEqual(3, cfg.with_seed(9).steps)


class AncestralSamplingTestCase(unittest.TestCase):
    def setUp(self):
        self.models = build_neural_models(2, 2, 0.3, (8,), (8,), (8,), seed=0)

    def test_same_seed_same_samples(self):
        z1, x1 = ancestral_sample(self.models.generator, 10, seed=4)
        z2, x2 = ancestral_sample(self.models.generator, 10, seed=4)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(x1, x2)
        self.assertEqual((10, 2), z1.shape)

    def test_empty_batch_rejected(self):
        with self.assertRaises(ContractViolation):
            ancestral_sample(self.models.generator, 0, seed=0)

    def test_linear_generator_marginal(self):
        testbed = GaussianTestbed.build(0.0, 1.0, (0.0, 1.0), (2.0, 1.0, 0.5), (0.0, 0.0, 1.0))
        _, x = ancestral_sample(testbed.generator, 40000, seed=1)
        marginal = testbed.generator.marginal()
        self.assertGreater(stats.ttest_1samp(x[:, 0], marginal.mean).pvalue, 1e-3)
        self.assertAlmostEqual(marginal.var, x.var(), delta=0.1)

    def test_zero_steps_keep_ancestral_samples(self):
        cfg = SamplerConfig(steps=0, step_size=0.1, seed=2)
        record = ancestral_langevin_sample(self.models.generator, self.models.energy, 16, cfg)
        _, x_hat = ancestral_sample(self.models.generator, 16, seed=2)
        np.testing.assert_array_equal(x_hat, record.initial)
        np.testing.assert_array_equal(record.initial, record.final)
        self.assertEqual(0.0, record.energy_gap)


class LangevinTestCase(unittest.TestCase):
    def test_noise_free_step_is_gradient_descent(self):
        energy = QuadraticEnergy(0.0, 1.0)
        x = np.array([[2.0]])
        np.testing.assert_allclose(langevin_step(energy, x, 0.5), x - 0.125 * x)

    def test_chain_is_deterministic_per_seed(self):
        energy = QuadraticEnergy(0.0, 1.0)
        cfg = SamplerConfig(steps=5, step_size=0.2, seed=7)
        a = langevin_chain(energy, np.zeros((4, 1)), cfg)
        b = langevin_chain(energy, np.zeros((4, 1)), cfg)
        np.testing.assert_array_equal(a.final, b.final)
        self.assertEqual(6, len(a.energy_trace))

    def test_chains_do_not_depend_on_batch_composition(self):
        energy = QuadraticEnergy(0.0, 1.0)
        cfg = SamplerConfig(steps=5, step_size=0.2, seed=7)
        a = langevin_chain(energy, np.zeros((2, 1)), cfg)
        b = langevin_chain(energy, np.zeros((5, 1)), cfg)
        np.testing.assert_array_equal(a.final, b.final[:2])

    def test_frames_are_kept(self):
        energy = QuadraticEnergy(0.0, 1.0)
        record = langevin_chain(energy, np.zeros((3, 1)), SamplerConfig(steps=4, step_size=0.2, keep_frames=True))
        self.assertEqual(5, len(record.frames))
        np.testing.assert_array_equal(record.frames[-1], record.final)

    def test_clamp_range(self):
        energy = QuadraticEnergy(10.0, 1.0)
        cfg = SamplerConfig(steps=20, step_size=0.5, noise_enabled=False, clamp_range=(-1.0, 1.0))
        record = langevin_chain(energy, np.zeros((2, 1)), cfg)
        self.assertTrue(np.all(record.final <= 1.0))

    def test_divergence_is_reported_with_step(self):
        energy = QuadraticEnergy(0.0, -1e300)
        with self.assertRaises(DivergedChainError) as caught:
            langevin_chain(energy, np.ones((1, 1)), SamplerConfig(steps=10, step_size=1.0, noise_enabled=False))
        self.assertLessEqual(caught.exception.step, 10)

    def test_chain_moments_match_closed_form_kernel(self):
        energy = QuadraticEnergy(1.0, 2.0)
        x0 = np.random.default_rng(3).normal(0.0, 1.0, size=(20000, 1))
        cfg = SamplerConfig(steps=15, step_size=0.2, seed=11)
        record = langevin_chain(energy, x0, cfg)
        expected = langevin_kernel_moments(1.0, 2.0, 0.0, 1.0, 15, 0.2)
        z = (record.final.mean() - expected.mean) / np.sqrt(expected.var / 20000)
        self.assertLess(abs(z), 4.0)
        self.assertAlmostEqual(expected.var, record.final.var(), delta=0.05)

    def test_noise_initialized_chains(self):
        energy = QuadraticEnergy(0.0, 1.0)
        record = noise_initialized_sample(energy, 8, SamplerConfig(steps=0, step_size=0.1, seed=1))
        expected = streams.stream(1, streams.NOISE_INIT).standard_normal((8, 1))
        np.testing.assert_array_equal(expected, record.initial)


class ReparameterizationTestCase(unittest.TestCase):
    def test_reparameterize(self):
        np.testing.assert_allclose(reparameterize([1.0], [4.0], [0.5]), [2.0])
        with self.assertRaises(ContractViolation):
            reparameterize([0.0], [0.0], [1.0])

    def test_draw_is_seeded(self):
        mu, v = np.zeros((3, 2)), np.ones((3, 2))
        np.testing.assert_array_equal(reparameterized_draw(mu, v, 5), reparameterized_draw(mu, v, 5))
        with self.assertRaises(ContractViolation):
            reparameterized_draw(mu, np.ones((3, 1)), 5)


class PredictTestCase(unittest.TestCase):
    def test_prediction_is_deterministic(self):
        models = build_neural_models(2, 2, 0.3, (8,), (8,), (8,), cond_dim=1, seed=0)
        cfg = SamplerConfig(steps=5, step_size=0.05, noise_enabled=False)
        y = np.linspace(-1, 1, 6)[:, None]
        a = predict(models.generator, models.energy, y, cfg)
        np.testing.assert_array_equal(a, predict(models.generator, models.energy, y, cfg.with_seed(99)))
        self.assertEqual((6, 2), a.shape)

    def test_prediction_needs_noise_free_sampler(self):
        models = build_neural_models(2, 2, 0.3, (8,), (8,), (8,), cond_dim=1, seed=0)
        with self.assertRaises(ContractViolation):
            predict(models.generator, models.energy, np.zeros((1, 1)), SamplerConfig(noise_enabled=True))


if __name__ == '__main__':
    unittest.main()
