"""
Cluster enumeration for the (partition) cluster-correlation expansion.

A cluster is a set of units (partitions for pCCE, single spins for
conventional CCE) in which every pair of units lies within the dipole radius.
The enumerated family is ordered by size, then lexicographically by unit
index, and is closed under taking subsets.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

if TYPE_CHECKING:
    from src.bath.generator import BathSystem
    from src.partitioning.constrained_kmeans import Partitioning

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cluster:
    """
    Attributes:
        units (Tuple[int, ...]): Sorted unit indices (partitions or spins).
        spins (Tuple[int, ...]): Sorted 0-based bath spin indices covered by the units.
    """

    units: Tuple[int, ...]
    spins: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.units)

    @property
    def is_empty(self) -> bool:
        return not self.units

    def label(self) -> str:
        return "{" + ",".join(str(u) for u in self.units) + "}"


EMPTY_CLUSTER = Cluster(units=(), spins=())


def dipole_radius(layer_thickness: float, concentration_ppm: float, r_d1: float = 45.0) -> float:
    """
    Dipole radius r_d (nm) for a layer of thickness L at a given concentration.

    The bulk value r_d1 (rho / 1 ppm)^(-1/3) is stretched by max(1, sqrt(2 r / L))
    in thin layers.

    Raises:
        ValueError: Unless every input is positive.
    """
    if layer_thickness <= 0 or concentration_ppm <= 0 or r_d1 <= 0:
        raise ValueError("Layer thickness, concentration and r_d1 must be positive.")
    bulk = r_d1 * concentration_ppm ** (-1.0 / 3.0)
    return bulk * max(1.0, math.sqrt(2.0 * bulk / layer_thickness))


def _adjacency(centers: np.ndarray, radius: float) -> List[Set[int]]:
    m = centers.shape[0]
    if math.isinf(radius):
        return [set(range(m)) - {i} for i in range(m)]
    neighbors: List[Set[int]] = [set() for _ in range(m)]
    if m > 1:
        for i, k in cKDTree(centers).query_pairs(radius):
            neighbors[i].add(k)
            neighbors[k].add(i)
    return neighbors


def neighbor_cliques(centers: np.ndarray, order: int, radius: float) -> List[Tuple[int, ...]]:
    """
    All index sets of size 1..order whose members are pairwise within `radius`.
    """
    pts = np.asarray(centers, dtype=float)
    if pts.shape[0] == 0:
        return []
    pts = pts.reshape(pts.shape[0], -1)
    neighbors = _adjacency(pts, radius)
    level = [(i,) for i in range(pts.shape[0])]
    cliques = list(level)
    for _ in range(2, order + 1):
        grown = []
        for clique in level:
            common = set.intersection(*(neighbors[u] for u in clique))
            grown.extend(clique + (j,) for j in sorted(common) if j > clique[-1])
        if not grown:
            break
        cliques.extend(grown)
        level = grown
    return cliques


def enumerate_clusters(
    partitioning: "Partitioning", order_N: int, dipole_radius_rd: float
) -> List[Cluster]:
    """
    Non-empty pCCE clusters of up to N partitions with pairwise center distance <= r_d.
    """
    if order_N < 1:
        raise ValueError("Cluster order N must be >= 1.")
    clusters = [
        Cluster(
            units=units,
            spins=tuple(sorted(s for u in units for s in partitioning.partitions[u])),
        )
        for units in neighbor_cliques(partitioning.centers, order_N, dipole_radius_rd)
    ]
    logger.info(f"Enumerated {len(clusters)} clusters ({cluster_size_counts(clusters)}).")
    return clusters


def enumerate_spin_clusters(
    system: "BathSystem", order_N: int, dipole_radius_rd: float
) -> List[Cluster]:
    """
    Conventional CCE clusters: dynamic spins as units, spin distance <= r_d.
    """
    if order_N < 1:
        raise ValueError("Cluster order N must be >= 1.")
    dyn = system.dynamic_indices
    clusters = []
    for local in neighbor_cliques(system.positions[dyn], order_N, dipole_radius_rd):
        spins = tuple(int(dyn[i]) for i in local)
        clusters.append(Cluster(units=spins, spins=spins))
    logger.info(f"Enumerated {len(clusters)} spin clusters ({cluster_size_counts(clusters)}).")
    return clusters


def cluster_size_counts(clusters: Sequence[Cluster]) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    for cluster in clusters:
        counts[cluster.size] = counts.get(cluster.size, 0) + 1
    return dict(sorted(counts.items()))


def is_subcluster_closed(clusters: Sequence[Cluster]) -> bool:
    """True if every non-empty proper subset of every cluster is itself present."""
    present = {c.units for c in clusters}
    for cluster in clusters:
        for size in range(1, cluster.size):
            for sub in itertools.combinations(cluster.units, size):
                if sub not in present:
                    return False
    return True
