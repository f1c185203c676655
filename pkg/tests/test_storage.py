"""
Unit Tests for Run Records and Plot Data.
"""

import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from src.analysis.fitting import fit_stretched_exponential
from src.engines.base import DecayCurve
from src.storage.records import (
    CLUSTERS_FILE,
    CURVE_FILE,
    FIT_FILE,
    RECORD_FILE,
    RunRecord,
    content_hash,
    find_run_dirs,
    is_complete,
    load_run,
    loglog_points,
    read_curve_csv,
    read_json,
    write_curve_csv,
    write_loglog_plot_data,
    write_run_outputs,
    write_scaling_plot_data,
)


def model_curve() -> DecayCurve:
    times = np.concatenate([[0.0], np.geomspace(0.01, 10.0, 49)])
    mx = np.exp(-((times / 2.0) ** 1.5))
    return DecayCurve(times=times, mx=mx, stderr=np.full(times.shape, 1e-3), method="pcce(2,1)")


def make_record(config_hash: str = "abc") -> RunRecord:
    return RunRecord(
        config={"method": "pcce(2,1)"},
        config_hash=config_hash,
        method="pcce(2,1)",
        master_seed=7,
        n_realizations=2,
        seeds=[11, 12],
    )


class TestHashing(unittest.TestCase):

    def test_key_order_irrelevant(self):
        self.assertEqual(content_hash({"a": 1, "b": [1, 2]}), content_hash({"b": [1, 2], "a": 1}))

    def test_value_sensitive(self):
        self.assertNotEqual(content_hash({"a": 1}), content_hash({"a": 2}))

    def test_numpy_values(self):
        self.assertEqual(content_hash({"a": np.float64(0.5)}), content_hash({"a": 0.5}))


class TestRunFiles(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_curve_csv_round_trip(self):
        curve = model_curve()
        path = write_curve_csv(curve, self.tmp / CURVE_FILE)
        loaded = read_curve_csv(path)
        np.testing.assert_array_equal(loaded.times, curve.times)
        np.testing.assert_array_equal(loaded.mx, curve.mx)
        np.testing.assert_array_equal(loaded.stderr, curve.stderr)
        self.assertEqual(path.read_text().splitlines()[0], "time_us,mx,stderr")

    def test_unreadable_curve(self):
        with self.assertRaises(ValueError):
            read_curve_csv(self.tmp / "missing.csv")

    def test_run_outputs(self):
        curve = model_curve()
        fit = fit_stretched_exponential(curve)
        run_dir = self.tmp / "run"
        write_run_outputs(run_dir, make_record("h1"), curve, fit, {"saturations": 0})
        for name in (RECORD_FILE, CURVE_FILE, FIT_FILE, CLUSTERS_FILE):
            self.assertTrue((run_dir / name).exists(), name)

        self.assertTrue(is_complete(run_dir, "h1"))
        self.assertFalse(is_complete(run_dir, "h2"))
        self.assertFalse(is_complete(self.tmp / "other", "h1"))

        record, loaded = load_run(run_dir)
        self.assertEqual(record.seeds, [11, 12])
        self.assertEqual(loaded.method, "pcce(2,1)")
        self.assertAlmostEqual(read_json(run_dir / FIT_FILE)["p"], fit.p)

    def test_outputs_are_reproducible(self):
        curve = model_curve()
        write_run_outputs(self.tmp / "a", make_record(), curve)
        write_run_outputs(self.tmp / "b", make_record(), curve)
        for name in (RECORD_FILE, CURVE_FILE, FIT_FILE):
            self.assertEqual(
                (self.tmp / "a" / name).read_bytes(), (self.tmp / "b" / name).read_bytes()
            )

    def test_find_run_dirs(self):
        write_run_outputs(self.tmp / "x" / "one", make_record(), model_curve())
        write_run_outputs(self.tmp / "two", make_record(), model_curve())
        found = find_run_dirs([self.tmp])
        self.assertEqual([p.name for p in found], ["two", "one"])

    def test_record_version(self):
        data = make_record().to_dict()
        self.assertEqual(RunRecord.from_dict(data), make_record())
        data["format_version"] = 2
        with self.assertRaises(ValueError):
            RunRecord.from_dict(data)


class TestPlotData(unittest.TestCase):

    def test_loglog_skips_undefined_points(self):
        curve = DecayCurve(
            times=np.arange(6.0),
            mx=np.array([1.0, 1.0, 0.5, 1.2, 0.3, -0.1]),
            stderr=np.zeros(6),
        )
        x, y, skipped = loglog_points(curve)
        self.assertEqual(skipped, 3)
        np.testing.assert_allclose(x, np.log([2.0, 4.0]))
        np.testing.assert_allclose(y, np.log(-np.log([0.5, 0.3])))

    def test_loglog_file(self):
        curve = model_curve()
        fit = fit_stretched_exponential(curve)
        with tempfile.TemporaryDirectory() as tmp:
            path, skipped = write_loglog_plot_data(curve, os.path.join(tmp, "loglog.dat"), fit)
            lines = path.read_text().splitlines()
        self.assertEqual(skipped, 0)
        self.assertTrue(lines[0].startswith("# pcce(2,1) p="))
        self.assertEqual(lines[1], "# ln_t ln_neg_ln_mx fit_line")
        self.assertEqual(len(lines), 2 + curve.times.size - 1)

    def test_scaling_blocks(self):
        table = pd.DataFrame(
            {
                "L": [30.0, 30.0, 240.0],
                "rho_ppm": [1.0, 10.0, 1.0],
                "mode": ["p1", "p1", "p1"],
                "p": [1.5, 1.4, 1.0],
                "p_err": [0.1, 0.1, 0.1],
                "T2_us": [10.0, 1.0, 20.0],
                "slope": [-1.0, -1.0, float("nan")],
            }
        )
        with tempfile.TemporaryDirectory() as tmp:
            text = write_scaling_plot_data(table, os.path.join(tmp, "scaling.dat")).read_text()
        blocks = text.strip("\n").split("\n\n\n")
        self.assertEqual(len(blocks), 2)
        first = blocks[0].splitlines()
        self.assertEqual(first[2], "0.0 1.0 1.5 0.1")
        self.assertEqual(first[3], "1.0 0.0 1.4 0.1")


if __name__ == "__main__":
    unittest.main()
