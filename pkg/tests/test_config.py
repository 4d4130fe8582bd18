import os
import tempfile
import unittest
from unittest import mock

from config.config import Config, RunSettings, load_config
from damping_model import DampingForm
from lab_errors import ConfigError


class TestConfig(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(self.temp_dir.cleanup)

    def _write(self, name, text):
        path = os.path.join(self.temp_dir.name, name)
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.alpha, 1.0)
        self.assertEqual(config.n_elements, 64)
        self.assertEqual(config.probe.lambda_points, 25)
        self.assertEqual(config.lab.hardy_samples, 200)
        self.assertEqual(config.validate_probe(), [])

    def test_file_then_overrides(self):
        path = self._write("beam.cfg", "# beam\nalpha = 2.5\nn_elements = 32  # coarse\n\nlambda_points = 12\n")
        config = load_config(path, ["alpha=0.75", "seed=9"])

        self.assertEqual(config.alpha, 0.75)
        self.assertEqual(config.n_elements, 32)
        self.assertIsInstance(config.n_elements, int)
        self.assertEqual(config.probe.lambda_points, 12)
        self.assertEqual(config.probe.seed, 9)

    def test_unknown_key_is_named(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides=["viscosity=3"])
        self.assertIn("viscosity", str(ctx.exception))

        path = self._write("bad.cfg", "alpha = 1\nmystery = 2\n")
        with self.assertRaises(ConfigError) as ctx:
            load_config(path)
        self.assertIn("mystery", str(ctx.exception))

    def test_malformed_input(self):
        with self.assertRaises(ConfigError):
            load_config(overrides=["alpha"])
        with self.assertRaises(ConfigError):
            load_config(overrides=["n_elements=many"])
        with self.assertRaises(ConfigError):
            load_config(self._write("broken.cfg", "alpha 1\n"))
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.temp_dir.name, "missing.cfg"))

    def test_damping_profile(self):
        config = load_config(overrides=["alpha=2", "kappa=0.5"])
        profile = config.damping_profile()
        self.assertEqual(profile.form, DampingForm.PURE_POWER)
        self.assertEqual((profile.alpha, profile.kappa), (2.0, 0.5))

        table = self._write("a.csv", "x,a\n0,0\n1,2\n")
        profile = load_config(overrides=["form=user_table", f"table_path={table}"]).damping_profile()
        self.assertEqual(profile.table_a, (0.0, 2.0))

        with self.assertRaises(ConfigError):
            load_config(overrides=["form=user_table"]).damping_profile()
        with self.assertRaises(ConfigError):
            load_config(overrides=["form=spline"]).damping_profile()

    def test_probe_validation(self):
        config = load_config(overrides=["lambda_min=500", "lambda_max=100", "lambda_points=4", "power_tol=0.01"])
        self.assertEqual(len(config.validate_probe()), 3)

    def test_save_and_reload(self):
        config = load_config(overrides=["alpha=3.5", "dt=0.005", "interp_samples=17"])
        path = os.path.join(self.temp_dir.name, "saved.cfg")
        config.save_to_file(path)

        reloaded = Config().load_from_file(path)
        self.assertEqual(reloaded.to_dict(), config.to_dict())


class TestRunSettings(unittest.TestCase):

    def test_environment_fills_defaults(self):
        env = {"BEAM_LAB_OUTPUT_DIR": "/tmp/beam-out", "BEAM_LAB_JOBS": "3", "BEAM_LAB_LOG_LEVEL": "DEBUG"}
        with mock.patch.dict(os.environ, env):
            settings = RunSettings()
        self.assertEqual(settings.output_dir, "/tmp/beam-out")
        self.assertEqual(settings.jobs, 3)
        self.assertEqual(settings.log_level, "DEBUG")

    def test_explicit_values_win(self):
        with mock.patch.dict(os.environ, {"BEAM_LAB_JOBS": "3"}):
            settings = RunSettings(output_dir="runs", jobs=1, run_db="runs/db.sqlite")
        self.assertEqual(settings.jobs, 1)
        self.assertEqual(settings.run_db, "runs/db.sqlite")


if __name__ == "__main__":
    unittest.main()
