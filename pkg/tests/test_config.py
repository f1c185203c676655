"""
Unit Tests for Configuration Documents.

Validates method parsing, section defaults, derived quantities and the
dotted field paths reported for invalid documents.
"""

import json
import os
import tempfile
import unittest
from pathlib import Path

from src.cli.commands import EXIT_OK, cmd_validate
from src.cli.models import (
    ConvergenceConfig,
    MethodSpec,
    RunConfig,
    SweepConfig,
    detect_kind,
    load_config,
    parse_config,
)
from src.core.exceptions import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

RUN = {
    "bath": {"concentration_ppm": 1.0, "layer_thickness_L": 30.0},
    "method": "pcce(2,4)",
}


class TestMethodSpec(unittest.TestCase):

    def test_parse(self):
        self.assertEqual(MethodSpec.parse("pCCE( 2, 4 )").label, "pcce(2,4)")
        self.assertEqual(MethodSpec.parse("cce(3)").order_N, 3)
        self.assertEqual(MethodSpec.parse("exact").kind, "exact")

    def test_invalid(self):
        for text in ("pcce(2)", "cce(0)", "pcce(0,2)", "dense"):
            with self.subTest(text=text):
                with self.assertRaises(ValueError):
                    MethodSpec.parse(text)


class TestRunConfig(unittest.TestCase):

    def test_defaults(self):
        config = parse_config(RUN)
        self.assertIsInstance(config, RunConfig)
        self.assertEqual(config.method, "pcce(2,4)")
        self.assertEqual(config.ensemble.n_realizations, 1)
        self.assertEqual(config.times().size, 60)

    def test_cce_defaults_per_partition_size(self):
        cce = parse_config(RUN).cce_config()
        self.assertEqual((cce.order_N, cce.partition_size_K), (2, 4))
        self.assertEqual(cce.averaging, "normal")
        self.assertEqual(cce.normal_samples, 10)

    def test_explicit_cce_fields_win(self):
        data = dict(RUN, cce={"normal_samples": 5})
        cce = parse_config(data).cce_config(workers=3)
        self.assertEqual(cce.normal_samples, 5)
        self.assertEqual(cce.workers, 3)

    def test_derived_radius_and_shell(self):
        config = parse_config(RUN)
        self.assertAlmostEqual(config.dipole_radius(), 77.94, places=2)
        self.assertAlmostEqual(config.bath_spec().shell_thickness, 2.0 / 3.0 * config.dipole_radius())

    def test_order_in_cce_section_rejected(self):
        with self.assertRaises(ConfigError):
            parse_config(dict(RUN, cce={"order_N": 3}))

    def test_conventional_order_limit(self):
        with self.assertRaises(ConfigError):
            parse_config(dict(RUN, method="cce(4)"))

    def test_unknown_key_path(self):
        data = {"bath": {"concentraton_ppm": 1.0, "layer_thickness_L": 30.0}, "method": "exact"}
        with self.assertRaises(ConfigError) as ctx:
            parse_config(data)
        self.assertEqual(ctx.exception.field_path, "bath.concentraton_ppm")

    def test_bad_time_grid(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(dict(RUN, time_grid=[0.0, 2.0, 1.0]))
        self.assertEqual(ctx.exception.field_path, "time_grid")

    def test_lattice_needs_grid(self):
        data = {"bath": {"kind": "lattice", "n_side": 4}, "method": "exact"}
        with self.assertRaises(ConfigError):
            parse_config(data)
        config = parse_config(dict(data, time_grid=[0.0, 1.0]))
        self.assertEqual(config.times().tolist(), [0.0, 1.0])

    def test_with_updates_revalidates(self):
        config = parse_config(dict(RUN, cce={"normal_samples": 5}))
        updated = config.with_updates({"bath.concentration_ppm": 8.0})
        self.assertEqual(updated.bath.concentration_ppm, 8.0)
        self.assertEqual(updated.cce_config().normal_samples, 5)
        with self.assertRaises(ValueError):
            config.with_updates({"bath.concentration_ppm": -1.0})


class TestStudyConfigs(unittest.TestCase):

    def test_sweep_cells(self):
        sweep = parse_config(
            {
                "base": RUN,
                "concentrations_ppm": [0.5, 1.0, 2.0],
                "layer_thicknesses_L": [30.0, 240.0],
                "hyperfine_modes": ["p1", "no_hyperfine"],
            }
        )
        self.assertIsInstance(sweep, SweepConfig)
        cells = sweep.cells()
        self.assertEqual(len(cells), 12)
        mode, thickness, rho, config = cells[-1]
        self.assertEqual((mode, thickness, rho), ("no_hyperfine", 240.0, 2.0))
        self.assertEqual(config.bath.concentration_ppm, 2.0)
        self.assertEqual(config.bath.hyperfine_mode, "no_hyperfine")

    def test_sweep_rejects_duplicates(self):
        with self.assertRaises(ConfigError):
            parse_config({"base": RUN, "concentrations_ppm": [1.0, 1.0], "layer_thicknesses_L": [30.0]})

    def test_convergence_rd_axis(self):
        study = parse_config({"base": RUN, "axis": "rd", "values": [45.0, 54.0]})
        self.assertIsInstance(study, ConvergenceConfig)
        config = study.config_for(54.0)
        self.assertEqual(config.cce.dipole_radius_rd, 54.0)
        self.assertAlmostEqual(config.bath.shell_thickness, 36.0)

    def test_convergence_k_axis(self):
        study = parse_config({"base": RUN, "axis": "K", "values": [1, 2], "reference": "exact"})
        self.assertEqual(study.config_for(2).method, "pcce(2,2)")
        self.assertEqual(study.exact_config().method, "exact")

    def test_convergence_needs_two_values(self):
        with self.assertRaises(ConfigError):
            parse_config({"base": RUN, "axis": "rb", "values": [60.0]})

    def test_detect_kind(self):
        self.assertEqual(detect_kind(RUN), "run")
        self.assertEqual(detect_kind({"axis": "K"}), "convergence")
        self.assertEqual(detect_kind({"concentrations_ppm": []}), "sweep")


class TestLoading(unittest.TestCase):

    def test_yaml_and_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            json_path = os.path.join(tmp, "run.json")
            with open(json_path, "w", encoding="utf-8") as f:
                json.dump(RUN, f)
            yaml_path = os.path.join(tmp, "run.yaml")
            with open(yaml_path, "w", encoding="utf-8") as f:
                f.write("bath:\n  concentration_ppm: 1.0\n  layer_thickness_L: 30.0\nmethod: pcce(2,4)\n")
            self.assertEqual(load_config(json_path), load_config(yaml_path))

    def test_not_a_mapping(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "list.json")
            with open(path, "w", encoding="utf-8") as f:
                f.write("[1, 2]")
            with self.assertRaises(ConfigError):
                load_config(path)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/config.json")

    def test_shipped_configs_validate(self):
        paths = sorted(
            p
            for pattern in ("run_*", "sweep_*", "convergence_*")
            for p in CONFIG_DIR.glob(pattern)
        )
        self.assertGreater(len(paths), 0)
        for path in paths:
            with self.subTest(config=path.name):
                self.assertEqual(cmd_validate(path), EXIT_OK)


if __name__ == "__main__":
    unittest.main()
