"""
P1 Bath Generator.

Places P1 centers on a [111]-oriented diamond lattice inside a slab of
thickness L centred on the NV, cut to a sphere of radius r_b plus a static
mean-field shell, and labels every spin with one of the five hyperfine
subgroups.

Two placement modes are available:
    - poisson: draw the occupied-site count from the Poisson law of the
      region, sample uniform positions and snap them to the nearest free
      lattice site.
    - enumerate: visit every lattice site of the region and occupy it with
      the site probability. Only feasible for small regions.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.bath.geometry import mean_nn_distance
from src.bath.lattice import DiamondLattice, region_volume
from src.core.constants import DEFAULT_CONSTANTS, SUBGROUP_PROBABILITIES, PhysicalConstants
from src.core.exceptions import EmptyBathError, PaddingExhaustedError
from src.core.parallel import STREAM_BATH, stream_rng
from src.physics.spin_algebra import CouplingTable

logger = logging.getLogger(__name__)

HyperfineMode = Literal["p1", "no_hyperfine"]
N_SUBGROUPS = len(SUBGROUP_PROBABILITIES)


class BathSpec(BaseModel):
    """
    Parameters of one random bath realization.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    concentration_ppm: float = Field(gt=0, description="P1 density relative to carbon sites (ppm)")
    layer_thickness_L: float = Field(gt=0, description="Slab thickness (nm)")
    bath_radius_rb: float = Field(gt=0, description="Radius of the dynamic sphere (nm)")
    shell_thickness: float = Field(default=0.0, ge=0, description="Static shell, usually 2/3 r_d (nm)")
    hyperfine_mode: HyperfineMode = "p1"
    seed: int = Field(default=0, ge=0, lt=2**64)
    placement: Literal["poisson", "enumerate"] = "poisson"

    @property
    def outer_radius(self) -> float:
        return self.bath_radius_rb + self.shell_thickness

    @property
    def occupation_probability(self) -> float:
        return self.concentration_ppm * 1e-6


@dataclass(frozen=True, eq=False)
class BathSystem:
    """
    An NV at the origin (z axis = [111]) and its bath of P1 spins.

    Bath spin i (0-based) is index i + 1 in the coupling table.

    Attributes:
        positions (np.ndarray): Bath positions (n, 3) in nm.
        subgroups (np.ndarray): Subgroup label 0..4 per spin.
        dynamic (np.ndarray): True for dynamic spins, False for static shell spins.
        couplings (CouplingTable): Pairwise J for NV + bath.
        spec (Optional[BathSpec]): Generating spec (None for hand-built systems).
    """

    positions: np.ndarray
    subgroups: np.ndarray
    dynamic: np.ndarray
    couplings: CouplingTable
    spec: Optional[BathSpec] = None
    nv_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def build(
        cls,
        positions: np.ndarray,
        subgroups: Sequence[int],
        dynamic: Optional[Sequence[bool]] = None,
        spec: Optional[BathSpec] = None,
        constants: PhysicalConstants = DEFAULT_CONSTANTS,
    ) -> "BathSystem":
        """
        Build a system from raw arrays, computing the coupling table.

        Raises:
            CoincidentSpinsError: If two spins (or a spin and the NV) coincide.
        """
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        labels = np.asarray(subgroups, dtype=int).reshape(-1)
        flags = np.ones(len(pos), dtype=bool) if dynamic is None else np.asarray(dynamic, dtype=bool)
        if not (len(pos) == len(labels) == len(flags)):
            raise ValueError("positions, subgroups and dynamic must have the same length.")
        if np.any((labels < 0) | (labels >= N_SUBGROUPS)):
            raise ValueError(f"Subgroup labels must lie in 0..{N_SUBGROUPS - 1}.")

        table = CouplingTable.from_geometry(pos, labels, constants)
        for arr in (pos, labels, flags):
            arr.setflags(write=False)
        return cls(positions=pos, subgroups=labels, dynamic=flags, couplings=table, spec=spec)

    @property
    def n_spins(self) -> int:
        return int(self.positions.shape[0])

    @property
    def n_dynamic(self) -> int:
        return int(np.count_nonzero(self.dynamic))

    @property
    def dynamic_indices(self) -> np.ndarray:
        """0-based indices of the dynamic spins."""
        return np.nonzero(self.dynamic)[0]

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    @cached_property
    def l_s(self) -> float:
        """Mean nearest-neighbour distance of the dynamic spins (nm)."""
        return mean_nn_distance(self)

    def subgroup_counts(self, dynamic_only: bool = True) -> Dict[int, int]:
        labels = self.subgroups[self.dynamic] if dynamic_only else self.subgroups
        return {g: int(np.count_nonzero(labels == g)) for g in range(N_SUBGROUPS)}

    def with_dynamic(self, dynamic: np.ndarray) -> "BathSystem":
        """Same spins and couplings with a new dynamic mask."""
        flags = np.asarray(dynamic, dtype=bool).copy()
        flags.setflags(write=False)
        return BathSystem(
            positions=self.positions,
            subgroups=self.subgroups,
            dynamic=flags,
            couplings=self.couplings,
            spec=self.spec,
        )

    def subset(self, indices: Sequence[int], constants: PhysicalConstants = DEFAULT_CONSTANTS) -> "BathSystem":
        """New system holding only the given spins (0-based, order preserved)."""
        idx = np.asarray(indices, dtype=int)
        return BathSystem.build(
            self.positions[idx], self.subgroups[idx], self.dynamic[idx], self.spec, constants
        )


# ------------------------------------------------------------------------------
# Subgroups
# ------------------------------------------------------------------------------
def assign_subgroups(
    spins: Union[int, Sequence], mode: HyperfineMode, rng: np.random.Generator
) -> np.ndarray:
    """
    Draw i.i.d. hyperfine subgroup labels.

    Args:
        spins (int | Sequence): Number of spins, or the spins themselves.
        mode (str): "p1" draws with probabilities (1, 1, 3, 3, 4)/12;
            "no_hyperfine" labels every spin 0.
        rng (np.random.Generator): Random source.

    Returns:
        np.ndarray: Integer labels.
    """
    n = spins if isinstance(spins, (int, np.integer)) else len(spins)
    if mode == "no_hyperfine":
        return np.zeros(int(n), dtype=int)
    if mode != "p1":
        raise ValueError(f"Unknown hyperfine mode: {mode}")
    return rng.choice(N_SUBGROUPS, size=int(n), p=SUBGROUP_PROBABILITIES).astype(int)


# ------------------------------------------------------------------------------
# Placement
# ------------------------------------------------------------------------------
def _sample_region(
    rng: np.random.Generator, count: int, radius: float, half_thickness: float
) -> np.ndarray:
    """Uniform points in sphere(radius) cut to |z| <= half_thickness (rejection)."""
    h = min(half_thickness, radius)
    accepted = []
    remaining = count
    while remaining > 0:
        batch = max(2 * remaining, 64)
        box = rng.uniform(-1.0, 1.0, size=(batch, 3)) * np.array([radius, radius, h])
        inside = box[np.sum(box**2, axis=1) <= radius**2]
        take = inside[:remaining]
        accepted.append(take)
        remaining -= len(take)
    return np.vstack(accepted) if accepted else np.zeros((0, 3))


def _canonical_order(keys: np.ndarray, positions: np.ndarray) -> np.ndarray:
    radii = np.round(np.linalg.norm(positions, axis=1), 9)
    return np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0], radii))


def generate_bath(spec: BathSpec, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> BathSystem:
    """
    Generate one random bath realization.

    Args:
        spec (BathSpec): Concentration, geometry, subgroup mode and seed.
        constants (PhysicalConstants): Lattice constant and coupling prefactor.

    Returns:
        BathSystem: Spins ordered by distance from the NV; spins beyond r_b
        are static shell spins.

    Raises:
        EmptyBathError: If no spin lands inside the dynamic sphere.
    """
    rng = stream_rng(spec.seed, STREAM_BATH)
    lattice = DiamondLattice(constants.lattice_constant_a)
    radius = spec.outer_radius
    half = spec.layer_thickness_L / 2.0

    if spec.placement == "enumerate":
        keys, positions = lattice.sites_in_region(radius, half)
        occupied = rng.random(len(keys)) < spec.occupation_probability
        keys, positions = keys[occupied], positions[occupied]
    else:
        expected = constants.p1_density(spec.concentration_ppm) * region_volume(radius, half)
        count = int(rng.poisson(expected))
        keys, positions = lattice.snap(_sample_region(rng, count, radius, half))

        inside = (np.sum(positions**2, axis=1) <= radius**2) & (np.abs(positions[:, 2]) <= half)
        inside &= np.any(keys != 0, axis=1)
        keys, positions = keys[inside], positions[inside]
        if len(keys):
            _, first = np.unique(keys, axis=0, return_index=True)
            first = np.sort(first)
            collisions = len(keys) - len(first)
            if collisions:
                logger.debug(f"Rejected {collisions} lattice-site collisions.")
            keys, positions = keys[first], positions[first]

    order = _canonical_order(keys, positions) if len(keys) else np.zeros(0, dtype=int)
    positions = positions[order]
    subgroups = assign_subgroups(len(positions), spec.hyperfine_mode, rng)
    dynamic = np.linalg.norm(positions, axis=1) <= spec.bath_radius_rb

    if not np.any(dynamic):
        raise EmptyBathError(
            f"No P1 spin within r_b = {spec.bath_radius_rb:.1f} nm "
            f"(rho = {spec.concentration_ppm} ppm, L = {spec.layer_thickness_L} nm)."
        )

    system = BathSystem.build(positions, subgroups, dynamic, spec, constants)
    logger.info(
        f"Generated bath: {system.n_dynamic} dynamic + {system.n_spins - system.n_dynamic} "
        f"shell spins (seed {spec.seed})."
    )
    return system


# ------------------------------------------------------------------------------
# Radius growth, padding and truncation
# ------------------------------------------------------------------------------
def pad_subgroups(system: BathSystem, partition_size: int) -> BathSystem:
    """
    Convert the nearest shell spins of each subgroup to dynamic spins until every
    subgroup's dynamic count is divisible by the partition size.

    Raises:
        ValueError: If partition_size < 1.
        PaddingExhaustedError: If a subgroup runs out of shell spins.
    """
    if partition_size < 1:
        raise ValueError("Partition size K must be >= 1.")
    dynamic = np.array(system.dynamic, copy=True)
    radii = system.radii

    for group, count in system.subgroup_counts().items():
        missing = (-count) % partition_size
        if missing == 0:
            continue
        candidates = np.nonzero((system.subgroups == group) & ~dynamic)[0]
        if len(candidates) < missing:
            raise PaddingExhaustedError(
                f"Subgroup {group} needs {missing} more spins for K = {partition_size}, "
                f"but only {len(candidates)} shell spins are available."
            )
        nearest = candidates[np.argsort(radii[candidates], kind="stable")[:missing]]
        dynamic[nearest] = True
        logger.debug(f"Padded subgroup {group} with {missing} shell spins.")

    return system.with_dynamic(dynamic)


def grow_bath_radius(
    spec: BathSpec,
    min_dynamic_spins: int = 140,
    partition_size: int = 1,
    growth_factor: float = 1.1,
    max_attempts: int = 60,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> Tuple[BathSpec, BathSystem]:
    """
    Enlarge r_b until the bath holds enough dynamic spins, then pad the subgroups.

    Args:
        spec (BathSpec): Starting spec.
        min_dynamic_spins (int): Required dynamic spin count.
        partition_size (int): K; every subgroup count is padded to a multiple of it.
        growth_factor (float): Multiplicative r_b step.
        max_attempts (int): Upper bound on the number of enlargements.
        constants (PhysicalConstants): Physical constants.

    Returns:
        Tuple[BathSpec, BathSystem]: The adjusted spec and the padded system.

    Raises:
        ValueError: If partition_size < 1.
        EmptyBathError: If the radius never reaches the required count.
        PaddingExhaustedError: From the padding step.
    """
    if partition_size < 1:
        raise ValueError("Partition size K must be >= 1.")

    current = spec
    for attempt in range(max_attempts):
        try:
            system = generate_bath(current, constants)
        except EmptyBathError:
            system = None
        if system is not None and system.n_dynamic >= min_dynamic_spins:
            if attempt:
                logger.info(
                    f"Grew r_b to {current.bath_radius_rb:.2f} nm for {system.n_dynamic} dynamic spins."
                )
            return current, pad_subgroups(system, partition_size)
        current = current.model_copy(
            update={"bath_radius_rb": current.bath_radius_rb * growth_factor}
        )

    raise EmptyBathError(
        f"Fewer than {min_dynamic_spins} dynamic spins after {max_attempts} radius enlargements."
    )


def truncate_to_nearest(
    system: BathSystem, n_spins: int, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> BathSystem:
    """
    Keep only the n dynamic spins closest to the NV; every other spin is removed.
    """
    if n_spins < 1:
        raise ValueError("At least one spin must be kept.")
    dyn = system.dynamic_indices
    if n_spins > len(dyn):
        raise ValueError(f"Cannot keep {n_spins} spins out of {len(dyn)} dynamic spins.")
    keep = np.sort(dyn[np.argsort(system.radii[dyn], kind="stable")[:n_spins]])
    return system.subset(keep, constants)


def lattice_bath(
    n_side: int,
    spacing: float = 20.0,
    hyperfine_mode: HyperfineMode = "no_hyperfine",
    n_spins: Optional[int] = None,
    seed: int = 0,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> BathSystem:
    """
    Square-lattice benchmark bath in the plane z = 0 around the NV.

    The n_side x n_side lattice is centred on the NV; for odd n_side it is shifted
    by half a spacing so no spin sits on the NV.

    Args:
        n_side (int): Sites per row.
        spacing (float): Nearest-neighbour distance (nm).
        hyperfine_mode (str): Subgroup labelling mode.
        n_spins (Optional[int]): Keep only the n spins closest to the NV.
        seed (int): Seed of the subgroup labels.
        constants (PhysicalConstants): Physical constants.

    Returns:
        BathSystem: All spins dynamic.
    """
    if n_side < 1 or spacing <= 0:
        raise ValueError("n_side must be >= 1 and spacing > 0.")
    coords = (np.arange(n_side) - (n_side - 1) / 2.0) * spacing
    if n_side % 2 == 1:
        coords = coords + spacing / 2.0
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    positions = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])

    radii = np.round(np.linalg.norm(positions, axis=1), 9)
    order = np.lexsort((positions[:, 1], positions[:, 0], radii))
    positions = positions[order]
    if n_spins is not None:
        positions = positions[:n_spins]

    rng = stream_rng(seed, STREAM_BATH)
    subgroups = assign_subgroups(len(positions), hyperfine_mode, rng)
    return BathSystem.build(positions, subgroups, None, None, constants)


def expected_dynamic_count(spec: BathSpec, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Expected number of dynamic spins for a spec."""
    volume = region_volume(spec.bath_radius_rb, spec.layer_thickness_L / 2.0)
    return constants.p1_density(spec.concentration_ppm) * volume


def shell_thickness_for(dipole_radius: float) -> float:
    """Static shell thickness 2/3 r_d."""
    return 2.0 * dipole_radius / 3.0

