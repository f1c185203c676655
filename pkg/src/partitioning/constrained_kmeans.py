"""
Constrained K-Means Partitioning.

Splits a point set into m = n / K groups of exactly K points each, minimizing
the within-group sum of squared distances to the group centroids. The
assignment step is an exact minimum-cost assignment of points to m * K center
slots (K slots per center), solved with `scipy.optimize.linear_sum_assignment`;
the update step moves every center to the centroid of its members.

Points are processed in a canonical (lexicographic) order, so relabelling the
input does not change the result.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.core.exceptions import InvariantError, PartitionSizeError
from src.core.parallel import STREAM_PARTITION, derive_seed

if TYPE_CHECKING:
    from src.bath.generator import BathSystem

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 200
OBJECTIVE_TOLERANCE = 1e-9  # nm^2
DEFAULT_RESTARTS = 10


@dataclass(frozen=True, eq=False)
class Partitioning:
    """
    Disjoint equal-size groups of point (or bath-spin) indices.

    Attributes:
        partitions (Tuple[Tuple[int, ...], ...]): Sorted member indices per partition.
        centers (np.ndarray): Centroid (m, 3) of every partition (nm).
        subgroup_of_partition (Tuple[int, ...]): Shared subgroup label (-1 if mixed).
        objective (float): Sum of squared member-to-center distances (nm^2).
        partition_size (int): K.
    """

    partitions: Tuple[Tuple[int, ...], ...]
    centers: np.ndarray
    subgroup_of_partition: Tuple[int, ...]
    objective: float
    partition_size: int

    @property
    def n_partitions(self) -> int:
        return len(self.partitions)

    def members(self) -> List[int]:
        return sorted(i for part in self.partitions for i in part)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "partition_size": self.partition_size,
            "objective_nm2": self.objective,
            "partitions": [list(p) for p in self.partitions],
            "centers_nm": self.centers.tolist(),
            "subgroups": list(self.subgroup_of_partition),
        }


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _seed_centers(points: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted (k-means++) choice of m initial centers among the points."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, m):
        total = nearest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=nearest / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(free[rng.integers(free.size)])
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def _lloyd_constrained(
    points: np.ndarray, k: int, centers: np.ndarray, max_iter: int, tol: float
) -> Tuple[np.ndarray, np.ndarray, float, int]:
    m = centers.shape[0]
    previous = np.inf
    labels = np.zeros(points.shape[0], dtype=int)
    objective = np.inf

    for iteration in range(1, max_iter + 1):
        cost = np.repeat(_squared_distances(points, centers), k, axis=1)
        rows, slots = linear_sum_assignment(cost)
        labels = np.empty(points.shape[0], dtype=int)
        labels[rows] = slots // k

        centers = np.vstack([points[labels == c].mean(axis=0) for c in range(m)])
        objective = float(np.sum((points - centers[labels]) ** 2))

        if objective > previous + tol * max(1.0, previous):
            raise InvariantError(
                f"Constrained k-means objective rose from {previous:.6e} to {objective:.6e} nm^2."
            )
        if previous - objective < tol:
            return labels, centers, objective, iteration
        previous = objective

    logger.debug(f"Constrained k-means stopped at the iteration cap ({max_iter}).")
    return labels, centers, objective, max_iter


def constrained_kmeans(
    points: np.ndarray,
    partition_size: int,
    seed: int = 0,
    n_init: int = DEFAULT_RESTARTS,
    max_iter: int = MAX_ITERATIONS,
    tol: float = OBJECTIVE_TOLERANCE,
) -> Partitioning:
    """
    Partition points into groups of exactly `partition_size` members.

    Args:
        points (np.ndarray): Positions (n, d) in nm.
        partition_size (int): K >= 1; n must be divisible by K.
        seed (int): Seed of the k-means++ initializations.
        n_init (int): Number of seeded restarts; the lowest objective wins.
        max_iter (int): Iteration cap per restart.
        tol (float): Stop once the objective decreases by less than this (nm^2).

    Returns:
        Partitioning: Indices refer to rows of `points`; subgroup labels are 0.

    Raises:
        PartitionSizeError: If K < 1 or n is not divisible by K.
        InvariantError: If the objective increases between iterations.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n = pts.shape[0]
    if partition_size < 1:
        raise PartitionSizeError(f"Partition size must be >= 1, got {partition_size}.")
    if n == 0 or n % partition_size != 0:
        raise PartitionSizeError(f"{n} points cannot be split into groups of {partition_size}.")

    order = np.lexsort(pts.T[::-1])
    canonical = pts[order]
    m = n // partition_size

    if partition_size == 1:
        labels = np.arange(n)
        centers = canonical.copy()
        objective = 0.0
    elif m == 1:
        labels = np.zeros(n, dtype=int)
        centers = canonical.mean(axis=0, keepdims=True)
        objective = float(np.sum((canonical - centers) ** 2))
    else:
        best: Optional[Tuple[np.ndarray, np.ndarray, float]] = None
        for restart in range(max(n_init, 1)):
            rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(restart,)))
            start = _seed_centers(canonical, m, rng)
            labels_r, centers_r, objective_r, iterations = _lloyd_constrained(
                canonical, partition_size, start, max_iter, tol
            )
            logger.debug(
                f"Restart {restart}: objective {objective_r:.4f} nm^2 after {iterations} iterations."
            )
            if best is None or objective_r < best[2] - tol:
                best = (labels_r, centers_r, objective_r)
        assert best is not None
        labels, centers, objective = best

    groups = [np.nonzero(labels == c)[0] for c in range(m)]
    # Partitions ordered by their first member in canonical order
    ranked = sorted(range(m), key=lambda c: int(groups[c][0]))
    partitions = tuple(tuple(sorted(int(order[i]) for i in groups[c])) for c in ranked)
    ordered_centers = np.vstack([centers[c] for c in ranked])

    return Partitioning(
        partitions=partitions,
        centers=ordered_centers,
        subgroup_of_partition=tuple(0 for _ in ranked),
        objective=float(objective),
        partition_size=partition_size,
    )


def partition_bath(
    system: "BathSystem",
    partition_size: int,
    seed: int = 0,
    mode: Literal["subgroup", "whole"] = "subgroup",
    n_init: int = DEFAULT_RESTARTS,
) -> Partitioning:
    """
    Partition the dynamic spins of a bath.

    Args:
        system (BathSystem): The bath; only dynamic spins are partitioned.
        partition_size (int): K.
        seed (int): Master seed; every subgroup gets its own derived seed.
        mode (str): "subgroup" partitions each subgroup separately (partitions are
            subgroup-pure); "whole" ignores subgroup labels.
        n_init (int): Restarts per constrained k-means call.

    Returns:
        Partitioning: Indices are 0-based bath spin indices.

    Raises:
        PartitionSizeError: If a subgroup's dynamic count is not divisible by K.
    """
    dynamic = np.asarray(system.dynamic, dtype=bool)
    labels = np.asarray(system.subgroups)

    if mode == "whole":
        groups: Sequence[Tuple[int, np.ndarray]] = [(-1, np.nonzero(dynamic)[0])]
    elif mode == "subgroup":
        groups = [
            (int(g), np.nonzero(dynamic & (labels == g))[0])
            for g in np.unique(labels[dynamic])
        ]
    else:
        raise ValueError(f"Unknown partitioning mode: {mode}")

    partitions: List[Tuple[int, ...]] = []
    centers: List[np.ndarray] = []
    subgroup_of: List[int] = []
    objective = 0.0
    for group, indices in groups:
        if indices.size == 0:
            continue
        group_seed = derive_seed(seed, STREAM_PARTITION, max(group, 0))
        result = constrained_kmeans(system.positions[indices], partition_size, group_seed, n_init)
        for part, center in zip(result.partitions, result.centers):
            members = tuple(sorted(int(indices[i]) for i in part))
            member_labels = set(int(labels[i]) for i in members)
            partitions.append(members)
            centers.append(center)
            subgroup_of.append(member_labels.pop() if len(member_labels) == 1 else -1)
        objective += result.objective

    logger.info(
        f"Partitioned {int(dynamic.sum())} dynamic spins into {len(partitions)} "
        f"partitions of size {partition_size} ({mode} mode)."
    )
    return Partitioning(
        partitions=tuple(partitions),
        centers=np.vstack(centers) if centers else np.zeros((0, 3)),
        subgroup_of_partition=tuple(subgroup_of),
        objective=objective,
        partition_size=partition_size,
    )
