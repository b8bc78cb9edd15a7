import json
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from cli import cli, cli_main
from cli.commands.sweep import sweep_points
from cli.runner import draw_samples, open_checkpoint, run_training, sweep_config
from config import RunConfig, apply_overrides
from storage import latest_checkpoint, read_metrics

SLOW = os.environ.get("EBMTEACH_SLOW_TESTS") == "1"


def tiny_run(output_dir, iterations=4):
    return ["--experiment.output_dir", str(output_dir), "--dataset.size", "200",
            "--model.energy_widths", "8", "--model.generator_widths", "8", "--model.encoder_widths", "8",
            "--train.iterations", str(iterations), "--train.eval_every", "2", "--train.checkpoint_every", "2",
            "--train.batch_size", "20", "--train.synthesis_size", "20", "--langevin.steps", "3",
            "--grid.resolution", "32", "--grid.bins", "8"]


class ExitCodeTestCase(unittest.TestCase):
    def test_selfchecks_pass(self):
        self.assertEqual(0, cli_main(["check"]))

    def test_usage_errors(self):
        self.assertEqual(2, cli_main(["no-such-command"]))
        self.assertEqual(2, cli_main(["sample"]))
        self.assertEqual(2, cli_main(["train", "--langevin.steps", "-3"]))
        self.assertEqual(2, cli_main(["train", "--langevin.speed", "3"]))

    def test_missing_config_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(2, cli_main(["train", "--config", str(Path(tmp) / "absent.txt")]))

    def test_corrupted_checkpoint_is_a_runtime_failure(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ckpt.bin"
            path.write_bytes(b"not a checkpoint\n")
            self.assertEqual(1, cli_main(["sample", "--checkpoint", str(path)]))


class TrainAndSampleTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name) / "run"
        self.runner = CliRunner()

    def tearDown(self):
        self.tmp.cleanup()

    def test_train_then_sample_without_langevin_steps(self):
        result = self.runner.invoke(cli, ["train", *tiny_run(self.run_dir)])
        self.assertEqual(0, result.exit_code, result.output)
        self.assertIn("grid_kl", result.output)
        self.assertTrue((self.run_dir / "config.txt").is_file())
        self.assertEqual(2, len(read_metrics(self.run_dir / "metrics.csv")))
        checkpoint = latest_checkpoint(self.run_dir)
        self.assertEqual("ckpt-00000004.bin", checkpoint.name)

        result = self.runner.invoke(cli, ["sample", "--checkpoint", str(checkpoint), "--count", "50",
                                          "--steps", "0"])
        self.assertEqual(0, result.exit_code, result.output)
        figures = self.run_dir / "samples" / "figures"
        self.assertEqual((figures / "samples_initial.csv").read_bytes(),
                         (figures / "samples_revised.csv").read_bytes())
        self.assertIn("energy_gap = 0.0", result.output)

        result = self.runner.invoke(cli, ["eval", "--checkpoint", str(checkpoint), "--count", "50"])
        self.assertEqual(0, result.exit_code, result.output)
        self.assertIn("energy_gap", result.output)

    def test_resume_continues_from_latest_checkpoint(self):
        self.assertEqual(0, self.runner.invoke(cli, ["train", *tiny_run(self.run_dir)]).exit_code)
        result = self.runner.invoke(cli, ["train", "--resume", *tiny_run(self.run_dir, iterations=6)])
        self.assertEqual(0, result.exit_code, result.output)
        self.assertEqual("ckpt-00000006.bin", latest_checkpoint(self.run_dir).name)
        iterations = [row["iteration"] for row in read_metrics(self.run_dir / "metrics.csv")]
        self.assertEqual([2, 4, 6], iterations)

    def test_conditional_training_and_prediction(self):
        result = self.runner.invoke(cli, ["train-cond", *tiny_run(self.run_dir)])
        self.assertEqual(0, result.exit_code, result.output)
        self.assertIn("predict_mse", result.output)
        self.assertTrue((self.run_dir / "predictions.csv").is_file())

        conditions = Path(self.tmp.name) / "conditions.csv"
        conditions.write_text("x0\n-0.5\n0.0\n0.5\n", encoding="utf-8")
        output = Path(self.tmp.name) / "predicted"
        result = self.runner.invoke(cli, ["predict", "--checkpoint", str(latest_checkpoint(self.run_dir)),
                                          "--conditions", str(conditions), "--output", str(output)])
        self.assertEqual(0, result.exit_code, result.output)
        self.assertEqual(4, len((output / "predictions.csv").read_text(encoding="utf-8").splitlines()))

        result = self.runner.invoke(cli, ["sample", "--checkpoint", str(latest_checkpoint(self.run_dir))])
        self.assertEqual(1, result.exit_code)


class SweepTestCase(unittest.TestCase):
    def test_sweep_points(self):
        self.assertEqual([{}], sweep_points({}))
        points = sweep_points({"gamma": [0.5, 1.0], "steps": [5]})
        self.assertEqual([{"train.gamma": "0.5", "langevin.steps": "5"},
                          {"train.gamma": "1.0", "langevin.steps": "5"}], points)

    def test_sweep_creates_one_directory_per_value(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp) / "sweep"
            result = CliRunner().invoke(cli, ["sweep", "--gamma", "0.5,1", *tiny_run(root)])
            self.assertEqual(0, result.exit_code, result.output)
            self.assertEqual(2, result.output.count("OK "))
            runs = sorted(p.name for p in root.iterdir() if p.is_dir())
            self.assertEqual(["run-gamma0.5", "run-gamma1.0"], runs)
            self.assertTrue((root / "run-gamma0.5" / "metrics.csv").is_file())

    def test_bad_sweep_values(self):
        result = CliRunner().invoke(cli, ["sweep", "--steps", "a,b"])
        self.assertEqual(2, result.exit_code)


class TestbedCommandTestCase(unittest.TestCase):
    def test_short_testbed_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = CliRunner().invoke(cli, ["testbed", "--iterations", "20", "--size", "200", "--batch", "50",
                                              "--output", tmp])
            self.assertEqual(0, result.exit_code, result.output)
            self.assertIn("kl_data_energy", result.output)
            summary = json.loads((Path(tmp) / "summary.json").read_text(encoding="utf-8"))
            self.assertEqual({"theta", "generator", "encoder", "divergences", "nash_residuals"}, set(summary))
            self.assertEqual(20 // 50 + 1, len(read_metrics(Path(tmp) / "metrics.csv")))


@unittest.skipUnless(SLOW, "set EBMTEACH_SLOW_TESTS=1 to run the long training runs")
class LongRunTestCase(unittest.TestCase):
    def test_eight_mode_mixture_is_covered(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = apply_overrides(RunConfig(), {"experiment.output_dir": tmp, "train.iterations": "50000",
                                                   "train.eval_every": "1000"})
            metrics = run_training(config).metrics
            self.assertGreaterEqual(metrics["mode_coverage_min"], 0.02)
            self.assertLess(metrics["grid_kl"], 0.3)

    def test_two_branch_prediction_and_sampling(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = apply_overrides(RunConfig(), {"experiment.output_dir": tmp, "model.conditional": "true",
                                                   "dataset.kind": "two_branch", "train.iterations": "10000",
                                                   "train.eval_every": "1000"})
            metrics = run_training(config).metrics
            self.assertLessEqual(metrics["predict_mse"], metrics["generator_mse"])

            config, state = open_checkpoint(latest_checkpoint(tmp))
            record = draw_samples(state.models, config, 400, seed=1, y=np.zeros((400, 1)))
            second = record.final[:, 1]
            self.assertGreater(np.mean(second > 0.25), 0.05)
            self.assertGreater(np.mean(second < -0.25), 0.05)

    def test_more_langevin_steps_lower_grid_kl_and_energy_gap(self):
        base = apply_overrides(RunConfig(), {"train.iterations": "20000", "train.eval_every": "1000"})
        grid_kl, gap = {}, {}
        with tempfile.TemporaryDirectory() as tmp:
            for steps in (5, 15):
                runs = [run_training(sweep_config(base, {"langevin.steps": str(steps), "experiment.seed": str(seed)},
                                                  Path(tmp))).metrics for seed in (0, 1, 2)]
                grid_kl[steps] = np.median([metrics["grid_kl"] for metrics in runs])
                gap[steps] = np.median([metrics["energy_gap"] for metrics in runs])
        self.assertLess(grid_kl[15], grid_kl[5])
        self.assertLess(gap[15], gap[5])


if __name__ == '__main__':
    unittest.main()
