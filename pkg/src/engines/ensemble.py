"""
Disorder ensembles.

Generates independent bath realizations from a master seed, runs an engine
on each of them and averages the curves pointwise. Realization r always uses
bath seed derive_seed(master_seed, r), so the ensemble does not depend on the
worker count or on scheduling order.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.bath.generator import (
    BathSpec,
    BathSystem,
    grow_bath_radius,
    pad_subgroups,
    truncate_to_nearest,
)
from src.core.exceptions import PcceError, RealizationError
from src.core.parallel import derive_seed, parallel_map
from src.engines.base import BaseEchoEngine, DecayCurve, average_curves
from src.engines.cce.config import CceConfig
from src.engines.cce.engine import PcceEngine

logger = logging.getLogger(__name__)


@dataclass
class RealizationTask:
    index: int
    engine: BaseEchoEngine
    times: np.ndarray
    master_seed: int
    spec: Optional[BathSpec] = None
    system: Optional[BathSystem] = None
    min_dynamic_spins: int = 140
    partition_size: int = 1
    truncate_to: Optional[int] = None


@dataclass
class RealizationOutcome:
    index: int
    bath_seed: int
    spec: Optional[BathSpec]
    system: BathSystem
    curve: DecayCurve


@dataclass
class EnsembleResult:
    """
    Attributes:
        curve (DecayCurve): Pointwise disorder average.
        realizations (List[RealizationOutcome]): Per-realization baths and curves.
    """

    curve: DecayCurve
    realizations: List[RealizationOutcome] = field(default_factory=list)

    @property
    def seeds(self) -> List[int]:
        return [r.bath_seed for r in self.realizations]


def realize_bath(task: RealizationTask, bath_seed: int) -> Tuple[Optional[BathSpec], BathSystem]:
    """
    Bath of one realization: prebuilt, or generated (grown, truncated, padded).
    """
    if task.system is not None:
        return task.spec, pad_subgroups(task.system, task.partition_size)
    if task.spec is None:
        raise ValueError("A realization needs either a bath spec or a prebuilt system.")

    spec = task.spec.model_copy(update={"seed": bath_seed})
    if task.truncate_to is None:
        return grow_bath_radius(spec, task.min_dynamic_spins, task.partition_size)

    required = max(task.min_dynamic_spins, task.truncate_to)
    spec, system = grow_bath_radius(spec, required, 1)
    return spec, pad_subgroups(truncate_to_nearest(system, task.truncate_to), task.partition_size)


def run_realization(task: RealizationTask) -> RealizationOutcome:
    """
    Generate, pad and simulate a single realization.

    Raises:
        RealizationError: Wrapping any simulator failure, with the bath seed.
    """
    bath_seed = derive_seed(task.master_seed, task.index)
    try:
        spec, system = realize_bath(task, bath_seed)
        curve = task.engine.simulate(system, task.times, task.master_seed, task.index)
    except (PcceError, ValueError) as e:
        raise RealizationError(str(e), task.index, bath_seed) from e
    return RealizationOutcome(task.index, bath_seed, spec, system, curve)


def _resolve_engine(engine: Union[BaseEchoEngine, CceConfig]) -> BaseEchoEngine:
    return PcceEngine(engine) if isinstance(engine, CceConfig) else engine


def _engine_partition_size(engine: BaseEchoEngine) -> int:
    config = getattr(engine, "config", None)
    return int(getattr(config, "partition_size_K", 1))


def _finish(engine: BaseEchoEngine, outcomes: List[RealizationOutcome]) -> EnsembleResult:
    curve = average_curves([o.curve for o in outcomes])
    curve.method = engine.name
    logger.info(
        f"Ensemble of {len(outcomes)} realizations finished: Mx(t_max) = {curve.mx[-1]:.4f}."
    )
    return EnsembleResult(curve=curve, realizations=list(outcomes))


def run_disorder_ensemble(
    spec: BathSpec,
    engine: Union[BaseEchoEngine, CceConfig],
    times: Sequence[float],
    n_realizations: int = 100,
    master_seed: int = 0,
    min_dynamic_spins: int = 140,
    partition_size: Optional[int] = None,
    workers: int = 1,
    truncate_to: Optional[int] = None,
) -> EnsembleResult:
    """
    Average an engine's decay curve over random bath realizations.

    Args:
        spec (BathSpec): Template spec; its seed is replaced per realization.
        engine (BaseEchoEngine | CceConfig): Engine, or a CceConfig for a pCCE engine.
        times (Sequence[float]): 2 tau grid (microseconds).
        n_realizations (int): Number of baths.
        master_seed (int): Seed from which all bath and mean-field seeds derive.
        min_dynamic_spins (int): Bath radius is grown until this many dynamic spins exist.
        partition_size (Optional[int]): K used for subgroup padding (default: the
            engine's K, or 1).
        workers (int): Realizations evaluated in parallel.
        truncate_to (Optional[int]): Keep only the n dynamic spins closest to the NV.

    Returns:
        EnsembleResult: The averaged curve and per-realization outcomes.

    Raises:
        RealizationError: The first failing realization aborts the ensemble.
    """
    if n_realizations < 1:
        raise ValueError("At least one realization is required.")
    engine = _resolve_engine(engine)
    if partition_size is None:
        partition_size = _engine_partition_size(engine)

    grid = np.asarray(times, dtype=float)
    tasks = [
        RealizationTask(
            index=r,
            engine=engine,
            times=grid,
            master_seed=master_seed,
            spec=spec,
            min_dynamic_spins=min_dynamic_spins,
            partition_size=partition_size,
            truncate_to=truncate_to,
        )
        for r in range(n_realizations)
    ]
    return _finish(engine, parallel_map(run_realization, tasks, workers))


def run_system_ensemble(
    systems: Sequence[BathSystem],
    engine: Union[BaseEchoEngine, CceConfig],
    times: Sequence[float],
    master_seed: int = 0,
    workers: int = 1,
) -> EnsembleResult:
    """
    Average an engine's decay curve over prebuilt baths (lattice benchmarks,
    loaded files). Realization r of the list gets the mean-field streams of index r.
    """
    if not systems:
        raise ValueError("At least one bath system is required.")
    engine = _resolve_engine(engine)
    grid = np.asarray(times, dtype=float)
    tasks = [
        RealizationTask(
            index=r,
            engine=engine,
            times=grid,
            master_seed=master_seed,
            spec=system.spec,
            system=system,
            partition_size=_engine_partition_size(engine),
        )
        for r, system in enumerate(systems)
    ]
    return _finish(engine, parallel_map(run_realization, tasks, workers))
