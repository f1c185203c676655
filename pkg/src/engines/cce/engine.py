"""
pCCE and conventional CCE engines.

Pipeline for one bath realization:
    1. partition the dynamic spins (pCCE only),
    2. enumerate clusters within the dipole radius,
    3. evaluate every cluster over its mean-field samples (worker pool),
    4. assemble the genuine contributions into the decay curve.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.parallel import STREAM_PARTITION, derive_seed, parallel_map
from src.engines.base import BaseEchoEngine, DecayCurve, validate_time_grid
from src.engines.cce.assembly import (
    UnphysicalStats,
    assemble_pcce,
    cluster_summary,
    unphysical_stats,
)
from src.engines.cce.clusters import (
    EMPTY_CLUSTER,
    Cluster,
    cluster_size_counts,
    dipole_radius,
    enumerate_clusters,
    enumerate_spin_clusters,
)
from src.engines.cce.config import CceConfig
from src.engines.cce.evaluation import ClusterBatch, ClusterResult, evaluate_batch
from src.partitioning.constrained_kmeans import Partitioning, partition_bath

if TYPE_CHECKING:
    from src.bath.generator import BathSystem

logger = logging.getLogger(__name__)

MAX_CONVENTIONAL_ORDER = 3


@dataclass
class CceRunResult:
    """Everything one CCE calculation produced for a single bath."""

    curve: DecayCurve
    clusters: List[ClusterResult]
    dipole_radius: float
    partitioning: Optional[Partitioning] = None

    def clusters_summary(self, tolerance: float) -> Dict[str, Any]:
        cluster_list = [res.cluster for res in self.clusters if not res.cluster.is_empty]
        return {
            "method": self.curve.method,
            "dipole_radius_nm": self.dipole_radius,
            "cluster_counts": {str(k): v for k, v in cluster_size_counts(cluster_list).items()},
            "saturations": self.curve.metadata.get("saturations", 0),
            "unphysical_clusters": sum(res.unphysical_flag(tolerance) for res in self.clusters),
            "partitioning": None if self.partitioning is None else self.partitioning.to_dict(),
            "clusters": cluster_summary(self.clusters, tolerance),
        }


def _chunks(items: Sequence[Cluster], n_chunks: int) -> List[List[Cluster]]:
    size = max(1, math.ceil(len(items) / max(n_chunks, 1)))
    return [list(items[i : i + size]) for i in range(0, len(items), size)]


class PcceEngine(BaseEchoEngine):
    """
    Partition cluster-correlation expansion pCCE(N, K).
    """

    def __init__(self, config: CceConfig, name: Optional[str] = None):
        super().__init__(name or f"pcce({config.order_N},{config.partition_size_K})")
        self.config = config

    def resolve_dipole_radius(self, system: "BathSystem") -> float:
        """
        Configured r_d, or the value derived from the bath's concentration and thickness.

        Raises:
            ValueError: If r_d is not configured and the bath carries no spec.
        """
        if self.config.dipole_radius_rd is not None:
            return self.config.dipole_radius_rd
        if system.spec is None:
            raise ValueError("dipole_radius_rd must be set for baths without a generating spec.")
        return dipole_radius(
            system.spec.layer_thickness_L, system.spec.concentration_ppm, self.config.rd_base_r_d1
        )

    def build_clusters(
        self, system: "BathSystem", seed: int, realization: int
    ) -> Tuple[List[Cluster], float, Optional[Partitioning]]:
        r_d = self.resolve_dipole_radius(system)
        partitioning = partition_bath(
            system,
            self.config.partition_size_K,
            derive_seed(seed, realization, STREAM_PARTITION),
            mode=self.config.partition_mode,
            n_init=self.config.kmeans_restarts,
        )
        return enumerate_clusters(partitioning, self.config.order_N, r_d), r_d, partitioning

    def evaluate(
        self,
        system: "BathSystem",
        clusters: Sequence[Cluster],
        times: np.ndarray,
        seed: int,
        realization: int,
        repetitions: int,
        samples: int,
    ) -> List[ClusterResult]:
        """Evaluate the empty cluster plus `clusters` over (R, S) mean-field samples."""
        family = [EMPTY_CLUSTER] + list(clusters)
        workers = self.config.workers
        batches = [
            ClusterBatch(chunk, system, self.config, times, seed, realization, repetitions, samples)
            for chunk in _chunks(family, 4 * workers if workers > 1 else 1)
        ]
        results: List[ClusterResult] = []
        for part in parallel_map(evaluate_batch, batches, workers):
            results.extend(part)
        return results

    def run(
        self,
        system: "BathSystem",
        times: Sequence[float],
        seed: int = 0,
        realization: int = 0,
    ) -> CceRunResult:
        """
        Full calculation for one bath realization.

        Args:
            system (BathSystem): Bath realization (dynamic spins padded for K).
            times (Sequence[float]): 2 tau grid (microseconds).
            seed (int): Master seed.
            realization (int): Realization index.

        Returns:
            CceRunResult: Curve, per-cluster results and the partitioning.
        """
        grid = validate_time_grid(times)
        clusters, r_d, partitioning = self.build_clusters(system, seed, realization)
        repetitions, samples = self.config.sample_shape
        results = self.evaluate(system, clusters, grid, seed, realization, repetitions, samples)
        curve = assemble_pcce(results, self.config.averaging, self.config, method=self.name)
        curve.metadata["dipole_radius_nm"] = r_d
        curve.metadata["n_clusters"] = len(clusters)
        curve.metadata["cluster_counts"] = {
            str(size): count for size, count in cluster_size_counts(clusters).items()
        }
        curve.metadata["unphysical_clusters"] = sum(
            res.unphysical_flag(self.config.unphysical_tolerance) for res in results
        )
        logger.info(
            f"{self.name}: realization {realization} done with {len(clusters)} clusters, "
            f"Mx(t_max) = {curve.mx[-1]:.4f}."
        )
        return CceRunResult(curve=curve, clusters=results, dipole_radius=r_d, partitioning=partitioning)

    def simulate(
        self,
        system: "BathSystem",
        times: Sequence[float],
        seed: int = 0,
        realization: int = 0,
    ) -> DecayCurve:
        return self.run(system, times, seed, realization).curve

    def unphysical_study(
        self,
        system: "BathSystem",
        times: Sequence[float],
        repetitions: int,
        seed: int = 0,
        realization: int = 0,
    ) -> UnphysicalStats:
        """
        Repeat the internally averaged calculation with fresh mean-field streams
        and count repetitions whose curve exceeds |Mx| = 1 + eps.
        """
        if repetitions < 1:
            raise ValueError("At least one repetition is required.")
        grid = validate_time_grid(times)
        clusters, _, _ = self.build_clusters(system, seed, realization)
        study = self.config.model_copy(update={"averaging": "combined"})
        engine = type(self)(study, self.name)
        results = engine.evaluate(
            system, clusters, grid, seed, realization, repetitions, self.config.internal_samples
        )
        return unphysical_stats(
            results,
            tolerance=self.config.unphysical_tolerance,
            division_guard=self.config.division_guard,
        )

    def describe(self) -> Dict[str, Any]:
        return {"method": self.name, "cce": self.config.model_dump()}


class ConventionalCceEngine(PcceEngine):
    """
    Conventional CCE(N): single spins as units and spin distances for the dipole radius.
    """

    def __init__(self, config: CceConfig, name: Optional[str] = None):
        if config.order_N > MAX_CONVENTIONAL_ORDER:
            raise ValueError(
                f"Conventional CCE supports N <= {MAX_CONVENTIONAL_ORDER}, got {config.order_N}."
            )
        super().__init__(config, name=name or f"cce({config.order_N})")

    def build_clusters(
        self, system: "BathSystem", seed: int, realization: int
    ) -> Tuple[List[Cluster], float, Optional[Partitioning]]:
        r_d = self.resolve_dipole_radius(system)
        return enumerate_spin_clusters(system, self.config.order_N, r_d), r_d, None
