import unittest

import numpy as np

from autodiff import DenseNet, LayerSpec, ParamStore, as_batch
from autodiff.checks import central_difference, finite_diff_check, relative_error
from core.errors import ContractViolation, MissingTraceError


class ParamStoreTestCase(unittest.TestCase):
    def setUp(self):
        self.store = ParamStore([("W0", np.arange(6.0).reshape(2, 3)), ("b0", np.array([1.0, 2.0, 3.0]))])

    def test_flatten_keeps_key_order(self):
        np.testing.assert_array_equal(self.store.flatten(), [0, 1, 2, 3, 4, 5, 1, 2, 3])
        self.assertEqual(9, self.store.total_dim)

    def test_unflatten_builds_new_store(self):
        other = self.store.unflatten(np.zeros(9))
        self.assertEqual(0.0, other.norm())
        self.assertNotEqual(0.0, self.store.norm())

    def test_setitem_is_in_place_and_shape_checked(self):
        alias = self.store["b0"]
        self.store["b0"] = [0.0, 0.0, 0.0]
        np.testing.assert_array_equal(alias, [0.0, 0.0, 0.0])
        with self.assertRaises(ContractViolation):
            self.store["b0"] = [1.0, 2.0]
        with self.assertRaises(ContractViolation):
            self.store["missing"] = [1.0]

    def test_arithmetic_requires_matching_keys(self):
        doubled = self.store + self.store
        self.assertEqual(doubled, self.store * 2.0)
        with self.assertRaises(ContractViolation):
            _ = self.store + ParamStore([("W0", np.zeros((2, 3)))])

    def test_duplicate_names_rejected(self):
        with self.assertRaises(ContractViolation):
            ParamStore([("a", np.zeros(1)), ("a", np.zeros(1))])


class TensorTestCase(unittest.TestCase):
    def test_as_batch_promotes_single_rows(self):
        self.assertEqual((1, 3), as_batch([1.0, 2.0, 3.0], 3).shape)

    def test_as_batch_rejects_wrong_width(self):
        with self.assertRaises(ContractViolation):
            as_batch(np.zeros((4, 2)), 3)

    def test_non_finite_input_rejected(self):
        with self.assertRaises(ContractViolation):
            as_batch([[np.nan, 0.0]], 2)


class DenseNetTestCase(unittest.TestCase):
    def test_layer_spec_validation(self):
        with self.assertRaises(ContractViolation):
            LayerSpec((3,))
        with self.assertRaises(ContractViolation):
            LayerSpec((3, 2), hidden_activation="softplus")

    def test_forward_shapes(self):
        net = DenseNet.initialize(LayerSpec((3, 5, 2)), seed=1)
        self.assertEqual((7, 2), net.forward(np.ones((7, 3))).shape)
        self.assertEqual((2,), net.forward(np.ones(3)).shape)
        with self.assertRaises(ContractViolation):
            net.forward(np.ones((7, 4)))

    def test_initialization_is_seeded(self):
        a = DenseNet.initialize(LayerSpec((2, 4, 1)), seed=3)
        b = DenseNet.initialize(LayerSpec((2, 4, 1)), seed=3)
        self.assertEqual(a.params, b.params)

    def test_float32_precision(self):
        net = DenseNet.initialize(LayerSpec((2, 4, 1)), seed=0, precision="float32")
        self.assertEqual(np.float32, net.forward(np.zeros((3, 2))).dtype)

    def test_backward_needs_forward_trace(self):
        net = DenseNet.initialize(LayerSpec((2, 3, 1)), seed=0)
        with self.assertRaises(MissingTraceError):
            net.grad_params(np.zeros((1, 2)), np.ones((1, 1)))
        net.forward(np.zeros((1, 2)))
        with self.assertRaises(MissingTraceError):
            net.grad_input(np.ones((1, 2)), np.ones((1, 1)))

    def test_linear_network_gradient_is_exact(self):
        net = DenseNet.initialize(LayerSpec((3, 1), output_activation="identity"), seed=2)
        x = np.array([[1.0, -2.0, 0.5]])
        net.forward(x)
        grads, dx = net.backward(x, np.ones((1, 1)))
        np.testing.assert_allclose(grads["W0"][:, 0], x[0])
        np.testing.assert_allclose(grads["b0"], [1.0])
        np.testing.assert_allclose(dx[0], net.params["W0"][:, 0])

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            sizes = tuple(int(s) for s in rng.integers(1, 6, size=rng.integers(2, 5)))
            net = DenseNet.initialize(LayerSpec(sizes, hidden_activation="tanh", output_activation="tanh"), rng)
            x = rng.normal(size=(4, sizes[0]))
            upstream = rng.normal(size=(4, sizes[-1]))
            report = finite_diff_check(net, x, upstream=upstream)
            self.assertTrue(report.passed, report)

    def test_finite_diff_check_restores_parameters(self):
        net = DenseNet.initialize(LayerSpec((2, 3, 1), hidden_activation="tanh"), seed=4)
        before = net.params.copy()
        finite_diff_check(net, np.ones((2, 2)))
        self.assertEqual(before, net.params)


class CheckHelpersTestCase(unittest.TestCase):
    def test_central_difference_of_quadratic(self):
        grad = central_difference(lambda v: float(np.sum(v * v)), np.array([1.0, -3.0]), 1e-4)
        np.testing.assert_allclose(grad, [2.0, -6.0], rtol=1e-8)

    def test_central_difference_rejects_bad_step(self):
        with self.assertRaises(ContractViolation):
            central_difference(lambda v: 0.0, np.zeros(1), 0.0)

    def test_relative_error_floor(self):
        self.assertAlmostEqual(1e-6 / 1e-3, relative_error([1e-6], [0.0]))
        self.assertEqual(0.0, relative_error([2.0], [2.0]))


if __name__ == '__main__':
    unittest.main()
