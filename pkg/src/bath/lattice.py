"""
Diamond Lattice Geometry.

The diamond structure is two interpenetrating FCC lattices offset by a/4 (1,1,1).
Sites are addressed by integer keys in units of a/4 in the conventional cubic
frame; the lab frame is the cubic frame rotated so that [111] lies along z.
The NV occupies the site with key (0, 0, 0).
"""

import logging
import math
from typing import Tuple

import numpy as np

from src.core.exceptions import CapacityError

logger = logging.getLogger(__name__)

# Conventional-cell basis of the diamond structure (units of a/4)
_FCC_BASIS = np.array([[0, 0, 0], [0, 2, 2], [2, 0, 2], [2, 2, 0]], dtype=np.int64)
DIAMOND_BASIS = np.vstack([_FCC_BASIS, _FCC_BASIS + 1])

MAX_ENUMERATED_SITES = 20_000_000


def rotation_111_to_z() -> np.ndarray:
    """
    Orthogonal matrix R with R @ (1,1,1)/sqrt(3) = z; lab = R @ cubic.

    The lab x axis is [1-10] and the lab y axis is [11-2].
    """
    e_x = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    e_y = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    e_z = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
    return np.vstack([e_x, e_y, e_z])


def nearest_d3_points(u: np.ndarray) -> np.ndarray:
    """
    Nearest points of the D3 lattice (integer vectors with even coordinate sum).

    Args:
        u (np.ndarray): Points of shape (n, 3) in lattice units.

    Returns:
        np.ndarray: Integer array of shape (n, 3).
    """
    f = np.rint(u)
    odd = (np.sum(f, axis=1) % 2) != 0
    if np.any(odd):
        delta = u[odd] - f[odd]
        worst = np.argmax(np.abs(delta), axis=1)
        rows = np.nonzero(odd)[0]
        step = np.sign(delta[np.arange(rows.size), worst])
        step[step == 0] = 1.0
        f[rows, worst] += step
    return f.astype(np.int64)


class DiamondLattice:
    """
    Diamond lattice with lattice constant `a` (nm), [111] along the lab z axis.
    """

    def __init__(self, lattice_constant: float):
        if lattice_constant <= 0:
            raise ValueError("Lattice constant must be positive.")
        self.a = float(lattice_constant)
        self.rotation = rotation_111_to_z()

    def keys_to_lab(self, keys: np.ndarray) -> np.ndarray:
        cubic = np.asarray(keys, dtype=float).reshape(-1, 3) * (self.a / 4.0)
        return cubic @ self.rotation.T

    def snap(self, lab_points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Move every point to its nearest diamond site.

        Args:
            lab_points (np.ndarray): Positions (n, 3) in the lab frame (nm).

        Returns:
            Tuple[np.ndarray, np.ndarray]: Integer site keys (n, 3) and the
            snapped lab positions (n, 3).
        """
        points = np.asarray(lab_points, dtype=float).reshape(-1, 3)
        cubic = points @ self.rotation
        half = self.a / 2.0

        first = nearest_d3_points(cubic / half)
        second = nearest_d3_points((cubic - self.a / 4.0) / half)
        first_pos = first * half
        second_pos = second * half + self.a / 4.0

        use_second = np.sum((cubic - second_pos) ** 2, axis=1) < np.sum(
            (cubic - first_pos) ** 2, axis=1
        )
        keys = np.where(use_second[:, None], 2 * second + 1, 2 * first)
        return keys, self.keys_to_lab(keys)

    def sites_in_region(self, radius: float, half_thickness: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Enumerate every site with |r| <= radius and |z| <= half_thickness, origin excluded.

        Raises:
            CapacityError: If the bounding block holds too many candidate sites.
        """
        m = int(math.ceil(radius / self.a)) + 1
        n_candidates = (2 * m + 1) ** 3 * len(DIAMOND_BASIS)
        if n_candidates > MAX_ENUMERATED_SITES:
            raise CapacityError(
                f"Direct enumeration would visit {n_candidates} sites; use Poisson placement."
            )

        span = np.arange(-m, m + 1, dtype=np.int64)
        cells = np.stack(np.meshgrid(span, span, span, indexing="ij"), axis=-1).reshape(-1, 3)
        keys = (4 * cells[:, None, :] + DIAMOND_BASIS[None, :, :]).reshape(-1, 3)
        positions = self.keys_to_lab(keys)

        inside = (np.sum(positions**2, axis=1) <= radius**2) & (
            np.abs(positions[:, 2]) <= half_thickness
        )
        inside &= np.any(keys != 0, axis=1)
        logger.debug(f"Enumerated {int(inside.sum())} lattice sites within r <= {radius:.2f} nm.")
        return keys[inside], positions[inside]


def region_volume(radius: float, half_thickness: float) -> float:
    """
    Volume (nm^3) of a sphere of `radius` cut to the slab |z| <= half_thickness.
    """
    h = min(half_thickness, radius)
    return math.pi * (2.0 * h * radius**2 - 2.0 * h**3 / 3.0)
