"""
CCE assembly.

The genuine contribution of a cluster C is

    L~_C = <Mx>_C / prod_{B proper subset of C} L~_B

(the empty cluster included, with L~_0 = 1), and the total coherence is the
product of all genuine contributions. Sample arrays have shape (R, S, T):
contributions are formed from the mean over S, and the final product is
averaged over R. Normal averaging uses (R, S) = (n_normal, 1), internal
averaging (1, n_internal), combined averaging (n_normal, n_internal).
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.config import settings
from src.engines.base import DecayCurve
from src.engines.cce.config import AveragingMode, CceConfig
from src.engines.cce.evaluation import ClusterResult

logger = logging.getLogger(__name__)


@dataclass
class AssemblyResult:
    """
    Attributes:
        repetition_curves (np.ndarray): Product of contributions per repetition, (R, T).
        tilde_l (Dict): Genuine contribution per cluster (keyed by units), (R, T).
        saturations (int): Number of (repetition, time) points hit by the division guard.
    """

    repetition_curves: np.ndarray
    tilde_l: Dict[Tuple[int, ...], np.ndarray] = field(default_factory=dict)
    saturations: int = 0


def _spin_order(result: ClusterResult) -> Tuple[int, Tuple[int, ...]]:
    return len(result.cluster.spins), result.cluster.spins


def assemble_repetitions(
    cluster_results: Sequence[ClusterResult], division_guard: Optional[float] = None
) -> AssemblyResult:
    """
    Genuine contributions and their product for every repetition.

    Raises:
        ValueError: If the results are empty, have inconsistent shapes, or the
            family is not closed under subsets.
    """
    guard = division_guard if division_guard is not None else settings.DIVISION_GUARD
    if not cluster_results:
        raise ValueError("No cluster results to assemble.")

    by_units = {res.cluster.units: res for res in cluster_results}
    shape = cluster_results[0].mx_samples.shape
    if any(res.mx_samples.shape != shape for res in cluster_results):
        raise ValueError("All cluster results must share the (R, S, T) sample shape.")
    repetitions, _, n_times = shape

    ones = np.ones((repetitions, n_times))
    tilde: Dict[Tuple[int, ...], np.ndarray] = {(): ones}
    saturations = 0

    for res in sorted(cluster_results, key=lambda r: (r.cluster.size, r.cluster.units)):
        units = res.cluster.units
        averaged = res.mx_samples.mean(axis=1)
        if not units:
            tilde[()] = averaged
            continue

        factors = [by_units[()]] if () in by_units else []
        for size in range(1, len(units)):
            for sub in itertools.combinations(units, size):
                if sub not in by_units:
                    raise ValueError(
                        f"Cluster {res.cluster.label()} is missing its subcluster {sub}."
                    )
                factors.append(by_units[sub])

        denominator = ones.copy()
        for factor in sorted(factors, key=_spin_order):
            denominator = denominator * tilde[factor.cluster.units]

        small = np.abs(denominator) < guard
        if np.any(small):
            count = int(small.sum())
            saturations += count
            logger.warning(
                f"Division guard saturated {count} points of cluster {res.cluster.label()}."
            )
        safe = np.where(small, 1.0, denominator)
        tilde[units] = np.where(small, 1.0, averaged / safe)

    total = ones.copy()
    for res in sorted(cluster_results, key=_spin_order):
        total = total * tilde[res.cluster.units]
    if () not in by_units:
        total = total * tilde[()]

    for res in cluster_results:
        res.tilde_l_curve = tilde[res.cluster.units].mean(axis=0)
    return AssemblyResult(repetition_curves=total, tilde_l=tilde, saturations=saturations)


def assemble_pcce(
    cluster_results: Sequence[ClusterResult],
    averaging: AveragingMode,
    config: Optional[CceConfig] = None,
    method: str = "",
) -> DecayCurve:
    """
    Assemble cluster signals into the averaged decay curve.

    Args:
        cluster_results (Sequence[ClusterResult]): A subset-closed family.
        averaging (str): "normal", "internal" or "combined"; sample arrays must
            have the matching (R, S) layout.
        config (Optional[CceConfig]): Division guard and unphysical tolerance.
        method (str): Label for the returned curve.

    Returns:
        DecayCurve: Mean over repetitions, with the repetition spread as stderr.
    """
    config = config or CceConfig(averaging=averaging)
    assembled = assemble_repetitions(cluster_results, config.division_guard)
    curves = assembled.repetition_curves
    repetitions, samples = cluster_results[0].mx_samples.shape[:2]

    if averaging == "internal" and repetitions != 1:
        raise ValueError("Internal averaging expects a single repetition.")
    if averaging == "normal" and samples != 1:
        raise ValueError("Normal averaging expects one sample per repetition.")

    stderr = (
        curves.std(axis=0, ddof=1) / math.sqrt(repetitions)
        if repetitions > 1
        else np.zeros(curves.shape[1])
    )
    unphysical = unphysical_fraction(curves, config.unphysical_tolerance)
    return DecayCurve(
        times=np.asarray(cluster_results[0].times, dtype=float).copy(),
        mx=curves.mean(axis=0),
        stderr=stderr,
        n_internal=samples,
        n_normal=repetitions,
        method=method,
        metadata={
            "averaging": averaging,
            "saturations": assembled.saturations,
            "unphysical_fraction": unphysical,
        },
    )


def unphysical_fraction(curves: np.ndarray, tolerance: float) -> float:
    """Share of rows (repetitions) with any |Mx| > 1 + tolerance."""
    rows = np.atleast_2d(curves)
    return float(np.mean(np.any(np.abs(rows) > 1.0 + tolerance, axis=1)))


@dataclass
class UnphysicalStats:
    repetitions: int
    unphysical: int
    fraction: float
    tolerance: float


def unphysical_stats(
    cluster_results: Sequence[ClusterResult],
    repetitions: Optional[int] = None,
    tolerance: Optional[float] = None,
    division_guard: Optional[float] = None,
) -> UnphysicalStats:
    """
    Fraction of mean-field repetitions whose assembled curve leaves [-1-eps, 1+eps].

    Each repetition r of the sample arrays is assembled on its own (internal
    average over its S samples), so the fraction counts repeated calculations
    with fresh mean-field configurations.

    Args:
        cluster_results (Sequence[ClusterResult]): Results with R >= 1 repetitions.
        repetitions (Optional[int]): Use only the first `repetitions` rows.
        tolerance (Optional[float]): eps (default settings.UNPHYSICAL_TOLERANCE).
        division_guard (Optional[float]): Guard used during assembly.
    """
    eps = tolerance if tolerance is not None else settings.UNPHYSICAL_TOLERANCE
    curves = assemble_repetitions(cluster_results, division_guard).repetition_curves
    if repetitions is not None:
        if repetitions < 1 or repetitions > curves.shape[0]:
            raise ValueError(f"Cannot use {repetitions} of {curves.shape[0]} repetitions.")
        curves = curves[:repetitions]
    flags = np.any(np.abs(curves) > 1.0 + eps, axis=1)
    stats = UnphysicalStats(
        repetitions=int(curves.shape[0]),
        unphysical=int(flags.sum()),
        fraction=float(flags.mean()),
        tolerance=eps,
    )
    logger.info(
        f"Unphysical behaviour in {stats.unphysical}/{stats.repetitions} repetitions "
        f"({stats.fraction:.0%})."
    )
    return stats


def cluster_summary(cluster_results: Sequence[ClusterResult], tolerance: float) -> List[Dict]:
    """Compact per-cluster diagnostics for the run record."""
    rows = []
    for res in cluster_results:
        rows.append(
            {
                "units": list(res.cluster.units),
                "spins": list(res.cluster.spins),
                "max_abs_mx": float(np.max(np.abs(res.mx_samples))),
                "unphysical": res.unphysical_flag(tolerance),
                "min_tilde_l": None if res.tilde_l_curve is None else float(np.min(res.tilde_l_curve)),
            }
        )
    return rows
