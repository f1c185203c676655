"""
Unit Tests for the Exact Reference Engine.
"""

import math
import unittest
from unittest.mock import patch

import numpy as np

from src.bath.generator import BathSystem, lattice_bath
from src.core.config import settings
from src.core.exceptions import CapacityError, TrotterStepError
from src.engines.exact.config import ExactConfig
from src.engines.exact.dense import DenseEchoPropagator
from src.engines.exact.engine import ExactEngine, default_trotter_step, exact_hahn_echo
from src.engines.exact.register import SpinRegister
from src.engines.exact.trotter import TrotterEchoPropagator
from src.engines.exact.typicality import mixed_state_average, typicality_average
from src.physics.spin_algebra import build_hamiltonian, hahn_echo_curve, random_pure_states

TIMES = np.array([0.0, 0.2, 0.5, 1.0, 2.0])

POSITIONS = np.array(
    [
        [2.0, 0.0, 0.5],
        [0.0, 3.0, -1.0],
        [-2.5, 1.0, 1.5],
        [4.0, 4.0, 0.0],
    ]
)


def bath(n: int, subgroups=None) -> BathSystem:
    labels = [0] * n if subgroups is None else list(subgroups)
    return BathSystem.build(POSITIONS[:n], labels)


class TestSpinRegister(unittest.TestCase):

    def test_layout(self):
        system = bath(3, (0, 0, 1))
        register = SpinRegister(system.couplings, [1, 2, 3])
        self.assertEqual(register.dimension, 16)
        self.assertEqual(register.mask(0), 8)
        self.assertEqual(len(register.pairs), 1)

    def test_sectors_partition_basis(self):
        register = SpinRegister(bath(3).couplings, [1, 2, 3])
        sectors = register.sectors()
        self.assertEqual(sorted(np.concatenate(sectors).tolist()), list(range(16)))
        # NV level x (0..3 downs)
        self.assertEqual(len(sectors), 8)

    def test_default_trotter_step(self):
        register = SpinRegister(bath(2).couplings, [1, 2])
        self.assertAlmostEqual(default_trotter_step(register), 1.0 / (50.0 * register.max_coupling))


class TestPropagators(unittest.TestCase):

    def setUp(self):
        self.register = SpinRegister(bath(4).couplings, [1, 2, 3, 4])
        self.states = random_pure_states(self.register.dimension, 3, np.random.default_rng(1))

    def test_dense_unitary(self):
        evolved = DenseEchoPropagator(self.register).evolve(self.states, 0.7)
        np.testing.assert_allclose(np.linalg.norm(evolved, axis=0), 1.0, atol=1e-12)

    def test_trotter_unitary(self):
        evolved = TrotterEchoPropagator(self.register, 0.01).evolve(self.states, 0.7)
        np.testing.assert_allclose(np.linalg.norm(evolved, axis=0), 1.0, atol=1e-12)

    def test_energy_conserved(self):
        dense = DenseEchoPropagator(self.register)
        before = dense.energy(self.states)
        after = dense.energy(dense.evolve(self.states, 1.3))
        np.testing.assert_allclose(after, before, atol=1e-9)

    def test_trotter_converges_to_dense(self):
        dense = DenseEchoPropagator(self.register).evolve(self.states, 0.5)
        trotter = TrotterEchoPropagator(self.register, 0.001).evolve(self.states, 0.5)
        np.testing.assert_allclose(trotter, dense, atol=1e-3)

    def test_trotter_second_order(self):
        """Halving the step cuts the echo error by four on an eight-spin lattice."""
        system = lattice_bath(3, spacing=3.0, n_spins=8)
        register = SpinRegister(system.couplings, range(1, 9))
        states = random_pure_states(register.dimension, 2, np.random.default_rng(7))
        dense = DenseEchoPropagator(register).echo(states, 2.0)
        errors = [
            np.max(np.abs(TrotterEchoPropagator(register, dt).echo(states, 2.0) - dense))
            for dt in (0.02, 0.01, 0.005)
        ]
        for coarse, fine in zip(errors, errors[1:]):
            with self.subTest(error=coarse):
                self.assertGreater(fine, 0.0)
                order = math.log2(coarse / fine)
                self.assertGreaterEqual(order, 1.7)
                self.assertLessEqual(order, 2.3)

    def test_invalid_step(self):
        with self.assertRaises(ValueError):
            TrotterEchoPropagator(self.register, 0.0)


class TestTypicality(unittest.TestCase):

    def test_constant_observable(self):
        def evolve(states):
            return np.ones((states.shape[1], 4))

        result = typicality_average(evolve, 10, np.random.default_rng(0), 8)
        np.testing.assert_allclose(result.mean, 1.0)
        np.testing.assert_allclose(result.stderr, 0.0)
        self.assertTrue(result.converged)

    def test_single_sample_has_no_error_estimate(self):
        def evolve(states):
            return np.ones((states.shape[1], 2))

        result = typicality_average(evolve, 1, np.random.default_rng(0), 4)
        self.assertTrue(np.all(np.isnan(result.stderr)))
        self.assertFalse(result.converged)

    def test_mixed_state_average(self):
        def evolve(states):
            return np.abs(states[0])[:, None] ** 2

        result = mixed_state_average(evolve, 4)
        self.assertAlmostEqual(float(result.mean[0]), 0.25)
        self.assertEqual(result.n_samples, 4)


class TestExactEngine(unittest.TestCase):

    def test_ising_bath_refocuses(self):
        curve = ExactEngine(ExactConfig(flipflop=False)).simulate(bath(4), TIMES)
        np.testing.assert_allclose(curve.mx, 1.0, atol=1e-12)

    def test_matches_cluster_echo(self):
        system = bath(2)
        h = build_hamiltonian([0, 1, 2], system.couplings, np.zeros(2))
        expected, _ = hahn_echo_curve(h, TIMES / 2.0)
        curve = exact_hahn_echo(system, ExactConfig(), TIMES)
        np.testing.assert_allclose(curve.mx, expected, atol=1e-10)
        self.assertEqual(curve.method, "exact(dense)")
        self.assertEqual(curve.metadata["n_bath_spins"], 2)

    def test_dense_and_trotter_agree(self):
        system = bath(4, (0, 0, 0, 1))
        dense = ExactEngine(ExactConfig()).simulate(system, TIMES)
        trotter = ExactEngine(ExactConfig(method="trotter")).simulate(system, TIMES)
        np.testing.assert_allclose(trotter.mx, dense.mx, atol=2e-3)
        self.assertIn("trotter_dt_us", trotter.metadata)

    def test_single_spin_typicality(self):
        config = ExactConfig(mixed_state_max_spins=0, typicality_samples=5)
        curve = ExactEngine(config).simulate(bath(1), TIMES, seed=3)
        np.testing.assert_allclose(curve.mx, 1.0, atol=1e-12)
        self.assertEqual(curve.metadata["bath_states"], 5)

    def test_typicality_close_to_mixed(self):
        system = bath(3)
        mixed = ExactEngine(ExactConfig()).simulate(system, TIMES)
        typical = ExactEngine(
            ExactConfig(mixed_state_max_spins=0, typicality_samples=400)
        ).simulate(system, TIMES, seed=2)
        np.testing.assert_allclose(typical.mx, mixed.mx, atol=0.1)

    def test_capacity(self):
        with self.assertRaises(CapacityError):
            ExactEngine(ExactConfig(dimension_cap=8)).simulate(bath(3), TIMES)

    def test_dense_capacity_follows_settings(self):
        self.assertEqual(ExactConfig().max_dimension, 2**settings.MAX_DENSE_SPINS)
        self.assertEqual(ExactConfig(method="trotter").max_dimension, 2**22)
        with patch.object(settings, "DIMENSION_CAP", 2**4):
            self.assertEqual(settings.MAX_DENSE_SPINS, 4)
            self.assertEqual(ExactConfig().max_dimension, 16)
            ExactEngine(ExactConfig()).simulate(bath(3), TIMES)
            with self.assertRaises(CapacityError):
                ExactEngine(ExactConfig()).simulate(bath(4), TIMES)

    def test_trotter_step_error(self):
        config = ExactConfig(
            method="trotter", trotter_dt=1.0, max_halvings=0, self_check_tolerance=1e-12
        )
        with self.assertRaises(TrotterStepError):
            ExactEngine(config).simulate(bath(3), TIMES)

    def test_shell_spins_ignored(self):
        system = BathSystem.build(POSITIONS[:3], [0, 0, 0], [True, True, False])
        curve = ExactEngine(ExactConfig()).simulate(system, TIMES)
        reference = ExactEngine(ExactConfig()).simulate(bath(2), TIMES)
        np.testing.assert_allclose(curve.mx, reference.mx, atol=1e-12)


if __name__ == "__main__":
    unittest.main()
