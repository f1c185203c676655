"""
Unit Tests for Disorder Ensembles.
"""

import unittest

import numpy as np
import pytest

from src.bath.generator import BathSpec, lattice_bath
from src.core.exceptions import RealizationError
from src.core.parallel import derive_seed, parallel_map, stream_rng
from src.engines.cce.config import CceConfig
from src.engines.cce.engine import ConventionalCceEngine
from src.engines.ensemble import run_disorder_ensemble, run_system_ensemble

TIMES = np.array([0.0, 0.5, 1.0, 2.0, 4.0])


def _square(x: int) -> int:
    return x * x


class TestRandomStreams(unittest.TestCase):

    def test_same_key_same_stream(self):
        a = stream_rng(5, 1, 2).random(4)
        b = stream_rng(5, 1, 2).random(4)
        np.testing.assert_array_equal(a, b)

    def test_different_keys_differ(self):
        self.assertNotEqual(derive_seed(5, 0), derive_seed(5, 1))
        self.assertNotEqual(derive_seed(5, 0), derive_seed(6, 0))

    def test_parallel_map_keeps_order(self):
        self.assertEqual(parallel_map(_square, [3, 1, 2]), [9, 1, 4])


class TestDisorderEnsemble(unittest.TestCase):

    def setUp(self):
        self.spec = BathSpec(
            concentration_ppm=10.0,
            layer_thickness_L=20.0,
            bath_radius_rb=15.0,
            shell_thickness=5.0,
        )
        self.config = CceConfig(order_N=2, dipole_radius_rd=10.0, normal_samples=2)

    def run_ensemble(self, **overrides):
        kwargs = {
            "n_realizations": 2,
            "master_seed": 3,
            "min_dynamic_spins": 4,
            "truncate_to": 4,
        }
        kwargs.update(overrides)
        return run_disorder_ensemble(self.spec, self.config, TIMES, **kwargs)

    def test_seeds_and_sizes(self):
        result = self.run_ensemble()
        self.assertEqual(result.seeds, [derive_seed(3, 0), derive_seed(3, 1)])
        self.assertEqual(result.curve.n_disorder, 2)
        self.assertEqual(result.curve.method, "pcce(2,1)")
        for outcome in result.realizations:
            self.assertEqual(outcome.system.n_dynamic, 4)
            self.assertEqual(outcome.spec.seed, outcome.bath_seed)

    def test_reproducible(self):
        first = self.run_ensemble()
        second = self.run_ensemble()
        np.testing.assert_array_equal(first.curve.mx, second.curve.mx)
        self.assertEqual(first.curve.mx[0], 1.0)

    def test_failing_realization_reports_seed(self):
        spec = self.spec.model_copy(update={"concentration_ppm": 1e-6, "bath_radius_rb": 2.0})
        with self.assertRaises(RealizationError) as ctx:
            run_disorder_ensemble(spec, self.config, TIMES, n_realizations=1, master_seed=9, min_dynamic_spins=4)
        self.assertEqual(ctx.exception.seed, derive_seed(9, 0))
        self.assertEqual(ctx.exception.realization, 0)

    def test_no_realizations(self):
        with self.assertRaises(ValueError):
            self.run_ensemble(n_realizations=0)

    @pytest.mark.slow
    def test_worker_count_does_not_change_result(self):
        serial = self.run_ensemble(n_realizations=3)
        pooled = self.run_ensemble(n_realizations=3, workers=2)
        np.testing.assert_array_equal(serial.curve.mx, pooled.curve.mx)
        self.assertEqual(serial.seeds, pooled.seeds)


class TestSystemEnsemble(unittest.TestCase):

    def test_lattice_baths(self):
        systems = [lattice_bath(3, spacing=5.0, n_spins=4, seed=s) for s in (1, 2)]
        engine = ConventionalCceEngine(CceConfig(order_N=2, dipole_radius_rd=8.0, normal_samples=1))
        result = run_system_ensemble(systems, engine, TIMES, master_seed=1)
        self.assertEqual(result.curve.n_disorder, 2)
        self.assertEqual(result.curve.method, "cce(2)")
        self.assertEqual(result.curve.mx[0], 1.0)

    def test_empty_list(self):
        with self.assertRaises(ValueError):
            run_system_ensemble([], CceConfig(), TIMES)


if __name__ == "__main__":
    unittest.main()
