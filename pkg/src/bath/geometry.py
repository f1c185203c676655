"""
Geometry-derived bath quantities: nearest-neighbour distances and the
nearest-neighbour coupling histogram used to check the hyperfine-splitting
validity condition.
"""

import logging
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np
from scipy.spatial import cKDTree

from src.core.constants import DEFAULT_CONSTANTS, HYPERFINE_SPLITTING_THRESHOLD_MHZ, PhysicalConstants

if TYPE_CHECKING:
    from src.bath.generator import BathSystem

logger = logging.getLogger(__name__)


def nearest_neighbor_vectors(positions: np.ndarray) -> np.ndarray:
    """
    Displacement from every point to its nearest other point, shape (n, 3).
    """
    pts = np.asarray(positions, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        return np.zeros((0, 3))
    _, idx = cKDTree(pts).query(pts, k=2)
    return pts[idx[:, 1]] - pts


def nearest_neighbor_distances(positions: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Distance of each selected point to its nearest other point of the whole set.
    """
    dist = np.linalg.norm(nearest_neighbor_vectors(positions), axis=1)
    return dist if mask is None or dist.size == 0 else dist[np.asarray(mask, dtype=bool)]


def mean_nn_distance(system: "BathSystem") -> float:
    """
    Mean nearest-neighbour spin distance l_s (nm) over the dynamic spins.

    Raises:
        ValueError: If the system has fewer than two dynamic spins.
    """
    if system.n_dynamic < 2:
        raise ValueError("Mean nearest-neighbour distance needs at least two dynamic spins.")
    return float(np.mean(nearest_neighbor_distances(system.positions, system.dynamic)))


@dataclass
class CouplingHistogram:
    """
    Histogram of per-spin nearest-neighbour |J| values.

    Attributes:
        values (np.ndarray): |J| (MHz) of every spin to its nearest neighbour.
        counts (np.ndarray): Bin counts.
        edges (np.ndarray): Bin edges (MHz).
        threshold_mhz (float): Hyperfine-splitting threshold.
        fraction_above (float): Share of values above the threshold.
    """

    values: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    threshold_mhz: float
    fraction_above: float

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ("values", "counts", "edges"):
            data[key] = np.asarray(data[key]).tolist()
        return data


def nn_coupling_histogram(
    system: "BathSystem",
    bins: int = 50,
    threshold_mhz: float = HYPERFINE_SPLITTING_THRESHOLD_MHZ,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> CouplingHistogram:
    """
    Bin the nearest-neighbour coupling strength of every bath spin.

    Args:
        system (BathSystem): Bath whose spins (dynamic and shell) are examined.
        bins (int): Number of histogram bins.
        threshold_mhz (float): Couplings above this break the subgroup picture.
        constants (PhysicalConstants): Dipolar prefactor source.

    Returns:
        CouplingHistogram: Empty for a single-spin system.
    """
    vectors = nearest_neighbor_vectors(system.positions)
    if vectors.shape[0] == 0:
        return CouplingHistogram(
            values=np.zeros(0),
            counts=np.zeros(0, dtype=int),
            edges=np.zeros(0),
            threshold_mhz=threshold_mhz,
            fraction_above=0.0,
        )

    r2 = np.sum(vectors**2, axis=1)
    cos2 = vectors[:, 2] ** 2 / r2
    values = np.abs(constants.dipolar_prefactor_b * (1.0 - 3.0 * cos2) / r2**1.5)
    counts, edges = np.histogram(values, bins=bins)
    fraction = float(np.mean(values > threshold_mhz))

    if fraction > 0:
        logger.warning(
            f"{fraction:.2%} of nearest-neighbour couplings exceed {threshold_mhz} MHz."
        )
    return CouplingHistogram(
        values=values,
        counts=counts,
        edges=edges,
        threshold_mhz=threshold_mhz,
        fraction_above=fraction,
    )
