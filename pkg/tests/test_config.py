"""Tests for configuration loading, validation, and round-tripping."""

import tempfile
import unittest
from pathlib import Path

from k3lab.config import ExperimentConfig, load_config, pin_float, save_config


class DefaultsTest(unittest.TestCase):
    def test_minimal_config_fills_defaults(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.json"
            path.write_text("{}")
            cfg = load_config(path)
        self.assertEqual(cfg, ExperimentConfig())

    def test_keyvalue_text_with_comments(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.txt"
            path.write_text(
                "# mesh settings\n"
                "mesh_resolution = 16\n"
                "\n"
                "strict = true\n"
                "out_dir = results\n"
            )
            cfg = load_config(path)
        self.assertEqual(cfg.mesh_resolution, 16)
        self.assertTrue(cfg.strict)
        self.assertEqual(cfg.out_dir, "results")
        self.assertEqual(cfg.seed, ExperimentConfig().seed)

    def test_json_object_accepted(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.json"
            path.write_text('{"landmarks": 32, "ratio_band": 0.01}')
            cfg = load_config(path)
        self.assertEqual(cfg.landmarks, 32)
        self.assertEqual(cfg.ratio_band, 0.01)


class ValidationTest(unittest.TestCase):
    def test_bad_tolerance_sign_names_the_field(self):
        with self.assertRaisesRegex(ValueError, "ratio_band"):
            ExperimentConfig(ratio_band=-0.1)
        with self.assertRaisesRegex(ValueError, "cluster_tol"):
            ExperimentConfig(cluster_tol=0.0)

    def test_resolution_floor(self):
        with self.assertRaisesRegex(ValueError, "mesh_resolution"):
            ExperimentConfig(mesh_resolution=2)

    def test_unknown_key_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.json"
            path.write_text('{"mesh_res": 12}')
            with self.assertRaisesRegex(ValueError, "mesh_res"):
                load_config(path)

    def test_type_mismatch_names_the_field(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.json"
            path.write_text('{"landmarks": 24.5}')
            with self.assertRaisesRegex(ValueError, "landmarks"):
                load_config(path)

    def test_bad_float_format_rejected(self):
        with self.assertRaisesRegex(ValueError, "float_format"):
            ExperimentConfig(float_format="%zz")

    def test_malformed_line_reports_number(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.txt"
            path.write_text("mesh_resolution = 16\nbroken line\n")
            with self.assertRaisesRegex(ValueError, "line 2"):
                load_config(path)


class RoundTripTest(unittest.TestCase):
    def test_save_load_round_trip(self):
        cfg = ExperimentConfig(mesh_resolution=12, landmarks=48, strict=True,
                               annulus_band=0.03, out_dir="elsewhere")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "cfg.json"
            save_config(cfg, path)
            again = load_config(path)
        self.assertEqual(cfg, again)

    def test_pin_float_is_idempotent(self):
        for x in (1.0 / 3.0, 2.5e-17, -123.456789012345678):
            pinned = pin_float(x)
            self.assertEqual(pinned, pin_float(pinned))
        self.assertEqual(pin_float(0.25, ".3g"), 0.25)


if __name__ == "__main__":
    unittest.main()
