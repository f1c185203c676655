"""
Unit Tests for the Spin Algebra Module.

Covers the dipolar coupling, effective Hamiltonian construction and the
per-subset Hahn echo, including a brute-force density-matrix check of the
branch formula.
"""

import math
import unittest

import numpy as np
from scipy.linalg import expm

from src.core.constants import DEFAULT_CONSTANTS
from src.core.exceptions import CapacityError, CoincidentSpinsError, InvariantError
from src.physics.spin_algebra import (
    NV_CONVENTION,
    CouplingTable,
    assert_hermitian,
    build_hamiltonian,
    dipolar_coupling,
    hahn_echo_curve,
    hahn_echo_mx,
    random_pure_states,
    subgroup_magnetization_operators,
)


def make_table(j: np.ndarray, subgroups) -> CouplingTable:
    """Coupling table from an explicit J matrix (index 0 is the NV)."""
    labels = np.concatenate([[-1], np.asarray(subgroups, dtype=int)])
    allowed = labels[:, None] == labels[None, :]
    allowed[0, :] = False
    allowed[:, 0] = False
    np.fill_diagonal(allowed, False)
    return CouplingTable(j=np.asarray(j, dtype=float), flipflop_allowed=allowed, subgroups=labels)


def density_matrix_echo(h_full: np.ndarray, tau: float) -> float:
    """Echo of |+> (x) 1/d_B with full-space propagators and an explicit pulse."""
    dim = h_full.shape[0]
    bath_dim = dim // 2
    nv = np.outer(NV_CONVENTION.initial_state, NV_CONVENTION.initial_state)
    rho = np.kron(nv, np.eye(bath_dim) / bath_dim)
    u = expm(-2j * math.pi * tau * h_full)
    pulse = np.kron(NV_CONVENTION.pulse, np.eye(bath_dim))
    step = u @ pulse @ u
    rho_t = step @ rho @ step.conj().T
    ix = np.kron(NV_CONVENTION.ix0, np.eye(bath_dim))
    return float(2.0 * np.real(np.trace(rho_t @ ix)))


class TestDipolarCoupling(unittest.TestCase):

    def test_prefactor(self):
        """b = mu0/4pi gamma_e^2 hbar / 2pi is about 52.04 MHz nm^3."""
        self.assertAlmostEqual(DEFAULT_CONSTANTS.dipolar_prefactor_b, 52.04, delta=0.01)

    def test_coupling_along_z(self):
        self.assertAlmostEqual(dipolar_coupling([0.0, 0.0, 10.0]), -0.1041, places=4)

    def test_coupling_in_plane(self):
        self.assertAlmostEqual(dipolar_coupling([10.0, 0.0, 0.0]), 0.0520, places=4)

    def test_magic_angle_vanishes(self):
        theta = math.acos(1.0 / math.sqrt(3.0))
        r = 7.0 * np.array([math.sin(theta), 0.0, math.cos(theta)])
        self.assertAlmostEqual(dipolar_coupling(r), 0.0, places=12)

    def test_coincident_spins(self):
        with self.assertRaises(CoincidentSpinsError):
            dipolar_coupling([0.0, 0.0, 0.0])

    def test_coupling_table_coincident(self):
        with self.assertRaises(CoincidentSpinsError):
            CouplingTable.from_geometry(np.array([[1.0, 0, 0], [1.0, 0, 0]]), [0, 0])

    def test_coupling_table_symmetry(self):
        table = CouplingTable.from_geometry(
            np.array([[3.0, 0.0, 1.0], [0.0, 4.0, -2.0], [-5.0, 1.0, 0.5]]), [0, 0, 2]
        )
        np.testing.assert_allclose(table.j, table.j.T)
        self.assertFalse(table.flipflop_allowed[0].any())
        self.assertTrue(table.flipflop_allowed[1, 2])
        self.assertFalse(table.flipflop_allowed[1, 3])
        self.assertEqual(table.n_bath, 3)


class TestBuildHamiltonian(unittest.TestCase):

    def setUp(self):
        self.table = CouplingTable.from_geometry(
            np.array([[3.0, 0.0, 1.0], [0.0, 4.0, -2.0]]), [0, 0]
        )

    def test_nv_only(self):
        h = build_hamiltonian([0], self.table, np.zeros(2))
        self.assertEqual(h.dimension, 2)
        self.assertEqual(h.ising_terms, ())
        self.assertEqual(h.flipflop_terms, ())
        mx, stderr = hahn_echo_curve(h, [0.0, 0.5, 2.0])
        np.testing.assert_allclose(mx, 1.0, atol=1e-12)
        np.testing.assert_array_equal(stderr, 0.0)

    def test_different_subgroups_have_no_flipflop(self):
        table = CouplingTable.from_geometry(np.array([[3.0, 0.0, 1.0], [0.0, 4.0, -2.0]]), [0, 1])
        h = build_hamiltonian([0, 1, 2], table, np.zeros(2))
        self.assertEqual(len(h.ising_terms), 3)
        self.assertEqual(h.flipflop_terms, ())

    def test_flipflop_coefficient(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2))
        self.assertEqual(len(h.flipflop_terms), 1)
        i, k, coeff = h.flipflop_terms[0]
        self.assertEqual((i, k), (1, 2))
        self.assertAlmostEqual(coeff, -self.table.j[1, 2] / 4.0)

    def test_static_fields_from_outside_spins(self):
        """h_1 = 0.2 * 0.5 + 0.4 * 0.5 = 0.3 MHz from two frozen spins."""
        j = np.zeros((4, 4))
        for (a, b), value in {(0, 1): 0.1, (0, 2): 0.6, (0, 3): -0.2, (1, 2): 0.2, (1, 3): 0.4}.items():
            j[a, b] = j[b, a] = value
        table = make_table(j, [0, 0, 0])
        h = build_hamiltonian([0, 1], table, np.array([-0.5, 0.5, 0.5]))
        self.assertAlmostEqual(h.field_of(1), 0.3)
        self.assertAlmostEqual(h.field_of(0), 0.2)
        self.assertEqual(h.ising_terms, ((0, 1, 0.1),))

    def test_subset_is_sorted(self):
        h = build_hamiltonian([2, 0, 1], self.table, np.zeros(2))
        self.assertEqual(h.subset, (0, 1, 2))
        self.assertTrue(h.nv_included)

    def test_repeated_index(self):
        with self.assertRaises(ValueError):
            build_hamiltonian([0, 1, 1], self.table, np.zeros(2))

    def test_wrong_meanfield_length(self):
        with self.assertRaises(ValueError):
            build_hamiltonian([0, 1], self.table, np.zeros(3))

    def test_dimension_cap(self):
        with self.assertRaises(CapacityError):
            build_hamiltonian([0, 1, 2], self.table, np.zeros(2), dimension_cap=4)

    def test_hermitian(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2))
        assert_hermitian(h.matrix())
        with self.assertRaises(InvariantError):
            assert_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_subgroup_magnetization_conserved(self):
        table = CouplingTable.from_geometry(
            np.array([[3.0, 0.0, 1.0], [0.0, 4.0, -2.0], [-5.0, 1.0, 0.5], [2.0, 2.0, 2.0]]),
            [0, 0, 2, 2],
        )
        h = build_hamiltonian([0, 1, 2, 3, 4], table, np.zeros(4))
        full = h.matrix()
        for operator in subgroup_magnetization_operators(h).values():
            np.testing.assert_allclose(full @ operator - operator @ full, 0.0, atol=1e-12)


class TestHahnEcho(unittest.TestCase):

    def setUp(self):
        self.table = CouplingTable.from_geometry(
            np.array([[3.0, 0.0, 1.0], [0.0, 4.0, -2.0]]), [0, 0]
        )
        self.taus = np.array([0.0, 0.05, 0.2, 0.5, 1.0])

    def test_matches_density_matrix_propagation(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2))
        mx, _ = hahn_echo_curve(h, self.taus)
        expected = [density_matrix_echo(h.matrix(), tau) for tau in self.taus]
        np.testing.assert_allclose(mx, expected, atol=1e-10)
        self.assertLess(mx[-1], 1.0)

    def test_ising_limit_refocuses(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2), flipflop=False)
        mx, _ = hahn_echo_curve(h, self.taus)
        np.testing.assert_allclose(mx, 1.0, atol=1e-12)

    def test_zero_tau(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2))
        mx, _ = hahn_echo_curve(h, [0.0])
        self.assertEqual(mx[0], 1.0)

    def test_static_nv_field_cancels(self):
        """A frozen spin coupled only to the NV leaves the echo unchanged."""
        j = np.zeros((4, 4))
        for (a, b), value in {(0, 1): 0.3, (0, 2): -0.5, (1, 2): 0.8, (0, 3): 1.7}.items():
            j[a, b] = j[b, a] = value
        table = make_table(j, [0, 0, 0])
        up = build_hamiltonian([0, 1, 2], table, np.array([0.0, 0.0, 0.5]))
        down = build_hamiltonian([0, 1, 2], table, np.array([0.0, 0.0, -0.5]))
        self.assertNotEqual(up.field_of(0), down.field_of(0))
        mx_up, _ = hahn_echo_curve(up, self.taus)
        mx_down, _ = hahn_echo_curve(down, self.taus)
        np.testing.assert_allclose(mx_up, mx_down, atol=1e-12)

    def test_typicality_approximates_mixed_state(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2))
        exact, _ = hahn_echo_curve(h, self.taus)
        rng = np.random.default_rng(7)
        approx, stderr = hahn_echo_curve(h, self.taus, "typicality", 2000, rng)
        np.testing.assert_allclose(approx, exact, atol=0.1)
        self.assertTrue(np.all(stderr[1:] > 0))

    def test_single_time_echo(self):
        h = build_hamiltonian([0, 1, 2], self.table, np.zeros(2))
        curve, _ = hahn_echo_curve(h, self.taus)
        for tau, expected in zip(self.taus, curve):
            with self.subTest(tau=tau):
                mx = hahn_echo_mx(h, tau)
                self.assertIsInstance(mx, float)
                self.assertAlmostEqual(mx, expected, places=12)
                self.assertAlmostEqual(mx, density_matrix_echo(h.matrix(), tau), places=10)

        typical, _ = hahn_echo_curve(h, [0.5], "typicality", 16, np.random.default_rng(3))
        single = hahn_echo_mx(h, 0.5, "typicality", 16, np.random.default_rng(3))
        self.assertAlmostEqual(single, typical[0], places=12)

    def test_requires_nv(self):
        h = build_hamiltonian([1, 2], self.table, np.zeros(2))
        with self.assertRaises(ValueError):
            hahn_echo_curve(h, [0.1])

    def test_negative_tau(self):
        h = build_hamiltonian([0, 1], self.table, np.zeros(2))
        with self.assertRaises(ValueError):
            hahn_echo_curve(h, [-0.1])

    def test_random_pure_states_normalized(self):
        states = random_pure_states(8, 5, np.random.default_rng(0))
        self.assertEqual(states.shape, (8, 5))
        np.testing.assert_allclose(np.linalg.norm(states, axis=0), 1.0)


if __name__ == "__main__":
    unittest.main()
