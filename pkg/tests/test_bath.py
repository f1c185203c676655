"""
Unit Tests for Bath Generation.

Exercises random placement, subgroup labelling, padding to the partition
size, geometry diagnostics, benchmark lattices and JSON persistence.
"""

import os
import tempfile
import unittest

import numpy as np

from src.bath.generator import (
    BathSpec,
    BathSystem,
    assign_subgroups,
    expected_dynamic_count,
    generate_bath,
    grow_bath_radius,
    lattice_bath,
    pad_subgroups,
    shell_thickness_for,
    truncate_to_nearest,
)
from src.bath.geometry import nn_coupling_histogram
from src.bath.io import bath_from_dict, bath_to_dict, load_bath, save_bath
from src.core.constants import SUBGROUP_PROBABILITIES
from src.core.exceptions import EmptyBathError, PaddingExhaustedError


def line_system(dynamic_counts, shell_per_group):
    """Spins on the x axis: dynamic ones first, then the shell spins of every subgroup."""
    dyn_labels = [g for g, count in enumerate(dynamic_counts) for _ in range(count)]
    shell_labels = [g for g in range(len(dynamic_counts)) for _ in range(shell_per_group)]
    labels = dyn_labels + shell_labels
    positions = np.column_stack(
        [1.0 + 0.5 * np.arange(len(labels)), np.zeros(len(labels)), np.zeros(len(labels))]
    )
    dynamic = [True] * len(dyn_labels) + [False] * len(shell_labels)
    return BathSystem.build(positions, labels, dynamic)


class TestGenerateBath(unittest.TestCase):

    def setUp(self):
        self.spec = BathSpec(
            concentration_ppm=10.0,
            layer_thickness_L=20.0,
            bath_radius_rb=20.0,
            shell_thickness=5.0,
            seed=42,
        )

    def test_deterministic(self):
        first = generate_bath(self.spec)
        second = generate_bath(self.spec)
        np.testing.assert_array_equal(first.positions, second.positions)
        np.testing.assert_array_equal(first.subgroups, second.subgroups)
        np.testing.assert_array_equal(first.couplings.j, second.couplings.j)

    def test_seed_changes_bath(self):
        other = generate_bath(self.spec.model_copy(update={"seed": 43}))
        first = generate_bath(self.spec)
        self.assertFalse(
            first.n_spins == other.n_spins and np.allclose(first.positions, other.positions)
        )

    def test_region_and_dynamic_flags(self):
        system = generate_bath(self.spec)
        radii = system.radii
        self.assertTrue(np.all(radii <= self.spec.outer_radius + 1e-9))
        self.assertTrue(np.all(np.abs(system.positions[:, 2]) <= 10.0 + 1e-9))
        np.testing.assert_array_equal(system.dynamic, radii <= self.spec.bath_radius_rb)
        self.assertTrue(np.all(radii > 0))
        # ordered by distance from the NV
        self.assertTrue(np.all(np.diff(radii) >= -1e-9))

    def test_no_hyperfine_labels(self):
        system = generate_bath(self.spec.model_copy(update={"hyperfine_mode": "no_hyperfine"}))
        self.assertTrue(np.all(system.subgroups == 0))

    def test_subgroup_frequencies(self):
        labels = assign_subgroups(100_000, "p1", np.random.default_rng(3))
        frequencies = np.bincount(labels, minlength=5) / labels.size
        np.testing.assert_allclose(frequencies, SUBGROUP_PROBABILITIES, atol=0.01)

    def test_unknown_hyperfine_mode(self):
        with self.assertRaises(ValueError):
            assign_subgroups(3, "other", np.random.default_rng(0))

    def test_empty_bath(self):
        spec = BathSpec(concentration_ppm=1e-6, layer_thickness_L=10.0, bath_radius_rb=5.0)
        with self.assertRaises(EmptyBathError):
            generate_bath(spec)

    def test_expected_count_and_shell(self):
        self.assertGreater(expected_dynamic_count(self.spec), 10.0)
        self.assertAlmostEqual(shell_thickness_for(45.0), 30.0)

    def test_grow_bath_radius(self):
        spec = self.spec.model_copy(update={"bath_radius_rb": 8.0, "hyperfine_mode": "no_hyperfine"})
        grown_spec, system = grow_bath_radius(spec, min_dynamic_spins=20, partition_size=2)
        self.assertGreaterEqual(grown_spec.bath_radius_rb, 8.0)
        self.assertGreaterEqual(system.n_dynamic, 20)
        self.assertEqual(system.n_dynamic % 2, 0)

    def test_truncate_to_nearest(self):
        system = generate_bath(self.spec)
        small = truncate_to_nearest(system, 5)
        self.assertEqual(small.n_spins, 5)
        self.assertEqual(small.n_dynamic, 5)
        nearest = np.sort(system.radii[system.dynamic])[:5]
        np.testing.assert_allclose(np.sort(small.radii), nearest)
        with self.assertRaises(ValueError):
            truncate_to_nearest(system, system.n_dynamic + 1)


class TestPadding(unittest.TestCase):

    def test_pad_to_multiple_of_four(self):
        system = line_system((37, 35, 101, 99, 130), shell_per_group=5)
        padded = pad_subgroups(system, 4)
        counts = padded.subgroup_counts()
        self.assertEqual([counts[g] for g in range(5)], [40, 36, 104, 100, 132])

    def test_pads_with_nearest_shell_spins(self):
        system = line_system((3, 1, 1, 1, 1), shell_per_group=3)
        padded = pad_subgroups(system, 2)
        added = np.nonzero(padded.dynamic & ~system.dynamic)[0]
        shell_zero = np.nonzero((system.subgroups == 0) & ~system.dynamic)[0]
        self.assertIn(shell_zero[0], added)
        self.assertNotIn(shell_zero[1], added)
        self.assertEqual(len(added), 5)

    def test_partition_size_one_unchanged(self):
        system = line_system((3, 2, 5, 1, 4), shell_per_group=2)
        np.testing.assert_array_equal(pad_subgroups(system, 1).dynamic, system.dynamic)

    def test_padding_exhausted(self):
        system = line_system((1, 4, 4, 4, 4), shell_per_group=1)
        with self.assertRaises(PaddingExhaustedError):
            pad_subgroups(system, 4)


class TestGeometry(unittest.TestCase):

    def test_mean_nn_distance(self):
        system = BathSystem.build(np.array([[7.0, 0.0, 0.0], [14.0, 0.0, 0.0]]), [0, 0])
        self.assertAlmostEqual(system.l_s, 7.0)

    def test_nn_histogram(self):
        system = BathSystem.build(np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 15.0]]), [0, 1])
        histogram = nn_coupling_histogram(system, bins=5)
        np.testing.assert_allclose(histogram.values, 0.1041, atol=1e-4)
        self.assertEqual(int(histogram.counts.sum()), 2)
        self.assertEqual(histogram.fraction_above, 0.0)

    def test_single_spin_histogram(self):
        system = BathSystem.build(np.array([[0.0, 0.0, 5.0]]), [0])
        histogram = nn_coupling_histogram(system)
        self.assertEqual(histogram.values.size, 0)
        self.assertEqual(histogram.to_dict()["counts"], [])


class TestLatticeBath(unittest.TestCase):

    def test_even_lattice(self):
        system = lattice_bath(4, spacing=20.0)
        self.assertEqual(system.n_spins, 16)
        self.assertTrue(np.all(system.positions[:, 2] == 0.0))
        self.assertAlmostEqual(float(system.radii.min()), np.hypot(10.0, 10.0))
        self.assertTrue(np.all(system.subgroups == 0))

    def test_odd_lattice_avoids_nv(self):
        system = lattice_bath(3, spacing=20.0)
        self.assertEqual(system.n_spins, 9)
        self.assertTrue(np.all(system.radii > 0))

    def test_nearest_spins(self):
        full = lattice_bath(4, spacing=20.0)
        part = lattice_bath(4, spacing=20.0, n_spins=12)
        self.assertEqual(part.n_spins, 12)
        np.testing.assert_allclose(part.radii, np.sort(full.radii)[:12])


class TestBathIO(unittest.TestCase):

    def test_json_round_trip(self):
        spec = BathSpec(concentration_ppm=10.0, layer_thickness_L=20.0, bath_radius_rb=15.0, seed=5)
        system = generate_bath(spec)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_bath(system, os.path.join(tmp, "bath.json"))
            loaded = load_bath(path)
        np.testing.assert_array_equal(loaded.positions, system.positions)
        np.testing.assert_array_equal(loaded.couplings.j, system.couplings.j)
        self.assertEqual(loaded.spec, system.spec)

    def test_unknown_version(self):
        data = bath_to_dict(lattice_bath(2))
        data["format_version"] = 99
        with self.assertRaises(ValueError):
            bath_from_dict(data)


if __name__ == "__main__":
    unittest.main()
