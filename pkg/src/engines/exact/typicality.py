"""
Canonical typicality: infinite-temperature averages from random pure states.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.physics.spin_algebra import random_pure_states

logger = logging.getLogger(__name__)

CONVERGENCE_STDERR = 0.01

# Maps a (dimension, n) matrix of bath states to (n, T) observable values
StateEvolution = Callable[[np.ndarray], np.ndarray]


@dataclass
class TypicalityResult:
    """
    Attributes:
        mean (np.ndarray): Averaged observable per time point.
        stderr (np.ndarray): Standard error per point (NaN for a single sample).
        n_samples (int): Number of states averaged.
        converged (bool): stderr < 0.01 at every time point.
    """

    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int
    converged: bool


def typicality_average(
    evolve: StateEvolution,
    n_samples: int,
    rng: np.random.Generator,
    dimension: int,
    threshold: float = CONVERGENCE_STDERR,
) -> TypicalityResult:
    """
    Average an observable over Haar-random bath states.

    Args:
        evolve (Callable): Evolution + measurement of a batch of states.
        n_samples (int): Number of random states (>= 1).
        rng (np.random.Generator): Source of the states.
        dimension (int): Bath Hilbert-space dimension.
        threshold (float): stderr bound for the convergence flag.

    Returns:
        TypicalityResult: Mean, standard error and convergence flag.
    """
    if n_samples < 1:
        raise ValueError("At least one typicality sample is required.")
    values = np.atleast_2d(evolve(random_pure_states(dimension, n_samples, rng)))
    mean = values.mean(axis=0)
    if n_samples > 1:
        stderr = values.std(axis=0, ddof=1) / math.sqrt(n_samples)
        converged = bool(np.all(stderr < threshold))
    else:
        stderr = np.full(mean.shape, np.nan)
        converged = False
    if not converged:
        logger.debug(f"Typicality average with {n_samples} samples not converged.")
    return TypicalityResult(mean=mean, stderr=stderr, n_samples=n_samples, converged=converged)


def mixed_state_average(evolve: StateEvolution, dimension: int) -> TypicalityResult:
    """
    Exact infinite-temperature trace: average over all basis states.
    """
    values = np.atleast_2d(evolve(np.eye(dimension, dtype=complex)))
    mean = values.mean(axis=0)
    return TypicalityResult(mean=mean, stderr=np.zeros(mean.shape), n_samples=dimension, converged=True)
