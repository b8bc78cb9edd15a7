import tempfile
import unittest
from pathlib import Path

import numpy as np

from autodiff import DenseNet, LayerSpec
from core.errors import ContractViolation
from core.models import ModelSet, NeuralEnergy, build_neural_models
from diagnostics.quadrature import GridSpec
from figures.emit import (REVISED_COLOR, emit_figures, heatmap_pixels, read_points_csv, scatter_pixels,
                          strip_pixels, write_points_csv)
from figures.netpbm import read_image, to_pixels, write_image
from sampling.samplers import SamplerConfig, ancestral_langevin_sample


class NetpbmTestCase(unittest.TestCase):
    def test_to_pixels(self):
        np.testing.assert_array_equal([0, 128, 255], to_pixels([0.0, 0.5, 1.0]))
        np.testing.assert_array_equal([128, 128], to_pixels([3.0, 3.0]))
        np.testing.assert_array_equal([0, 255], to_pixels([-5.0, 5.0], -1.0, 1.0))

    def test_write_then_read(self):
        with tempfile.TemporaryDirectory() as tmp:
            gray = np.arange(12, dtype=np.uint8).reshape(3, 4)
            color = np.zeros((2, 2, 3), dtype=np.uint8)
            color[0, 1] = (255, 0, 10)
            np.testing.assert_array_equal(gray, read_image(write_image(Path(tmp) / "a.pgm", gray)))
            np.testing.assert_array_equal(color, read_image(write_image(Path(tmp) / "b.ppm", color)))
            self.assertTrue((Path(tmp) / "a.pgm").read_bytes().startswith(b"P5"))

    def test_invalid_pixels(self):
        with self.assertRaises(ContractViolation):
            write_image("unused.pgm", np.zeros((2, 2)))
        with self.assertRaises(ContractViolation):
            write_image("unused.ppm", np.zeros((2, 2, 4), dtype=np.uint8))


class PanelsTestCase(unittest.TestCase):
    def test_scatter_orientation(self):
        canvas = scatter_pixels([(np.array([[-0.99, 0.99], [5.0, 5.0]]), REVISED_COLOR)], (-1.0, 1.0), size=10)
        np.testing.assert_array_equal(REVISED_COLOR, canvas[0, 0])
        self.assertEqual(1, int(np.sum(np.any(canvas != 255, axis=2))))

    def test_flat_energy_gives_flat_heatmap(self):
        models = build_neural_models(2, 2, 0.3, (8,), (8,), (8,), seed=0)
        flat = ModelSet(NeuralEnergy(DenseNet.zeros(LayerSpec((2, 8, 1))), 2), models.generator, models.encoder)
        pixels = heatmap_pixels(flat, GridSpec.square(2, -1.0, 1.0, 32))
        self.assertEqual((32, 32), pixels.shape)
        self.assertEqual(1, np.unique(pixels).size)
        with self.assertRaises(ContractViolation):
            heatmap_pixels(flat, GridSpec(((-1.0, 1.0),), (32,)))

    def test_strips(self):
        points = [np.zeros((4, 2)), np.ones((4, 2))]
        self.assertEqual((128, 2 * 128 + 2, 3), strip_pixels(points, (-1.0, 1.0)).shape)
        patches = [np.zeros((3, 9))] * 3
        self.assertEqual((3 * 3 * 8, 3 * 3 * 8 + 4, 3), strip_pixels(patches, (-1.0, 1.0)).shape)
        with self.assertRaises(ContractViolation):
            strip_pixels([np.zeros((2, 5))], (-1.0, 1.0))

    def test_points_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            points = np.array([[0.1, -0.2], [1.0 / 3.0, 2.0]])
            np.testing.assert_array_equal(points, read_points_csv(write_points_csv(Path(tmp) / "p.csv", points)))


class EmitFiguresTestCase(unittest.TestCase):
    def test_zero_step_chains_give_identical_sample_files(self):
        models = build_neural_models(2, 2, 0.3, (8,), (8,), (8,), seed=0)
        record = ancestral_langevin_sample(models.generator, models.energy, 64,
                                           SamplerConfig(steps=0, step_size=0.1, keep_frames=True))
        data = np.random.default_rng(0).uniform(-1.0, 1.0, size=(64, 2))
        with tempfile.TemporaryDirectory() as tmp:
            written = emit_figures(tmp, models, data, record, GridSpec.square(2, -1.0, 1.0, 32))
            out = Path(tmp) / "figures"
            names = {p.name for p in written}
            self.assertTrue({"scatter.ppm", "heatmap.pgm", "frames.ppm", "interpolation.csv",
                             "interpolation.ppm"} <= names)
            self.assertEqual((out / "samples_initial.csv").read_bytes(), (out / "samples_revised.csv").read_bytes())
            self.assertEqual((8, 2), read_points_csv(out / "interpolation.csv").shape)

    def test_conditional_models_skip_heatmap_and_interpolation(self):
        models = build_neural_models(2, 2, 0.3, (8,), (8,), (8,), cond_dim=1, seed=0)
        y = np.zeros((16, 1))
        record = ancestral_langevin_sample(models.generator, models.energy, 16,
                                           SamplerConfig(steps=2, step_size=0.05), y)
        with tempfile.TemporaryDirectory() as tmp:
            names = {p.name for p in emit_figures(tmp, models, None, record, GridSpec.square(2, -1.0, 1.0, 32))}
            self.assertEqual({"samples_initial.csv", "samples_revised.csv", "scatter.ppm"}, names)


if __name__ == '__main__':
    unittest.main()
