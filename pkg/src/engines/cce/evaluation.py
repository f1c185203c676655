"""
Per-cluster Hahn-echo evaluation.

Every cluster is solved in the Hilbert space of {NV} + its spins; all other
bath spins, shell spins included, enter as frozen mean-field values of +-1/2.

Random streams are keyed by (realization, stream kind, repetition[, sample,
cluster spins]) so that a given cluster sees the same mean-field values no
matter which worker evaluates it, and so that pCCE(N, 1) and conventional
CCE(N) draw identical numbers for identical spin clusters.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np

from src.core.parallel import STREAM_INTERNAL, STREAM_NORMAL, STREAM_TYPICALITY, stream_rng
from src.engines.cce.clusters import Cluster
from src.engines.cce.config import CceConfig
from src.physics.spin_algebra import NV_INDEX, build_hamiltonian, hahn_echo_curve

if TYPE_CHECKING:
    from src.bath.generator import BathSystem

logger = logging.getLogger(__name__)


@dataclass
class ClusterResult:
    """
    Echo signal of one cluster over all mean-field samples.

    Attributes:
        cluster (Cluster): The evaluated cluster.
        times (np.ndarray): 2 tau grid (microseconds).
        mx_samples (np.ndarray): Mx per (repetition, sample, time), shape (R, S, T).
        tilde_l_curve (Optional[np.ndarray]): Genuine contribution averaged over
            repetitions; filled in by the assembly.
    """

    cluster: Cluster
    times: np.ndarray
    mx_samples: np.ndarray
    tilde_l_curve: Optional[np.ndarray] = None

    @property
    def mx_curve(self) -> np.ndarray:
        return self.mx_samples.mean(axis=(0, 1))

    def unphysical_flag(self, tolerance: float) -> bool:
        return bool(np.any(np.abs(self.mx_samples) > 1.0 + tolerance))


def random_meanfield(rng: np.random.Generator, n_spins: int) -> np.ndarray:
    """Independent uniform +-1/2 values for every bath spin."""
    return 0.5 - rng.integers(0, 2, size=n_spins)


def meanfield_for(
    system: "BathSystem",
    cluster: Cluster,
    config: CceConfig,
    seed: int,
    realization: int,
    repetition: int,
    sample: int,
) -> np.ndarray:
    """
    Mean-field configuration seen by `cluster` in (repetition, sample).

    Normal averaging shares one configuration per repetition across all
    clusters; internal and combined averaging draw a fresh one per cluster.
    """
    if config.averaging == "normal":
        rng = stream_rng(seed, realization, STREAM_NORMAL, repetition)
    else:
        rng = stream_rng(seed, realization, STREAM_INTERNAL, repetition, sample, *cluster.spins)
    return random_meanfield(rng, system.n_spins)


def cluster_mx(
    cluster: Cluster,
    system: "BathSystem",
    meanfield: np.ndarray,
    config: CceConfig,
    times: Sequence[float],
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Echo signal Mx(t) of one cluster for one mean-field configuration.

    Args:
        cluster (Cluster): Spins solved exactly together with the NV.
        system (BathSystem): Bath providing couplings.
        meanfield (np.ndarray): +-1/2 per bath spin; cluster entries are ignored.
        config (CceConfig): Bath-state mode and flip-flop switch.
        times (Sequence[float]): 2 tau grid (microseconds).
        rng (Optional[np.random.Generator]): Source of typicality states.

    Returns:
        np.ndarray: Mx per time; exactly 1 at t = 0.

    Raises:
        CapacityError: If the cluster space exceeds the dimension caps.
    """
    grid = np.asarray(times, dtype=float)
    if cluster.is_empty:
        return np.ones(grid.size)

    subset = (NV_INDEX,) + tuple(s + 1 for s in cluster.spins)
    h = build_hamiltonian(subset, system.couplings, meanfield, flipflop=config.flipflop)
    if not h.flipflop_terms:
        # Static z-fields only: the echo refocuses them completely
        return np.ones(grid.size)

    mode = config.bath_state_mode
    if mode == "auto":
        mode = "mixed" if len(cluster.spins) <= config.mixed_state_max_spins else "typicality"
    mx, _ = hahn_echo_curve(h, grid / 2.0, mode, config.typicality_samples, rng)
    return mx


@dataclass
class ClusterBatch:
    """A contiguous slice of clusters evaluated by one worker."""

    clusters: List[Cluster]
    system: "BathSystem"
    config: CceConfig
    times: np.ndarray
    seed: int
    realization: int
    repetitions: int
    samples: int


def evaluate_batch(batch: ClusterBatch) -> List[ClusterResult]:
    """
    Evaluate every cluster of a batch over all (repetition, sample) pairs.
    """
    results = []
    for cluster in batch.clusters:
        out = np.empty((batch.repetitions, batch.samples, batch.times.size))
        for r in range(batch.repetitions):
            for s in range(batch.samples):
                meanfield = meanfield_for(
                    batch.system, cluster, batch.config, batch.seed, batch.realization, r, s
                )
                rng = stream_rng(
                    batch.seed, batch.realization, STREAM_TYPICALITY, r, s, *cluster.spins
                )
                out[r, s] = cluster_mx(cluster, batch.system, meanfield, batch.config, batch.times, rng)
        logger.debug(f"Cluster {cluster.label()} ({len(cluster.spins)} spins) evaluated.")
        results.append(ClusterResult(cluster=cluster, times=batch.times, mx_samples=out))
    return results
