"""
Base Echo Engine Module.

This module defines the abstract base class shared by every Hahn-echo engine
(pCCE, conventional CCE, exact propagation) and the `DecayCurve` container
they all return. Keeping one interface lets the CLI and the convergence study
run any engine interchangeably.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Sequence

import numpy as np
import pandas as pd

from src.core.constants import DEFAULT_CONSTANTS, PhysicalConstants

if TYPE_CHECKING:
    from src.bath.generator import BathSystem

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["time_us", "mx", "stderr"]
NORMALIZATION_TOLERANCE = 1e-9


@dataclass
class DecayCurve:
    """
    Averaged echo coherence <Mx(2 tau)> on a grid of total echo times.

    Attributes:
        times (np.ndarray): 2 tau values (microseconds), starting at 0.
        mx (np.ndarray): Averaged coherence.
        stderr (np.ndarray): Standard error per point (0 where no spread is available).
        n_disorder (int): Number of bath realizations averaged.
        n_internal (int): Internal mean-field samples per cluster factor.
        n_normal (int): Normal mean-field samples.
        method (str): Engine label, e.g. "pcce(2,4)".
        metadata (Dict[str, Any]): Engine diagnostics.
    """

    times: np.ndarray
    mx: np.ndarray
    stderr: np.ndarray
    n_disorder: int = 1
    n_internal: int = 1
    n_normal: int = 1
    method: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def variance(self) -> np.ndarray:
        return self.stderr**2

    @property
    def taus(self) -> np.ndarray:
        """Free-evolution times tau = t / 2."""
        return self.times / 2.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"time_us": self.times, "mx": self.mx, "stderr": self.stderr})[
            CURVE_COLUMNS
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "n_disorder": self.n_disorder,
            "n_internal": self.n_internal,
            "n_normal": self.n_normal,
            "time_us": self.times.tolist(),
            "mx": self.mx.tolist(),
            "stderr": self.stderr.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, **kwargs: Any) -> "DecayCurve":
        missing = set(CURVE_COLUMNS) - set(frame.columns)
        if missing:
            raise ValueError(f"Curve table is missing columns: {sorted(missing)}")
        return cls(
            times=frame["time_us"].to_numpy(dtype=float),
            mx=frame["mx"].to_numpy(dtype=float),
            stderr=frame["stderr"].to_numpy(dtype=float),
            **kwargs,
        )


def validate_time_grid(times: Sequence[float]) -> np.ndarray:
    """
    Raises:
        ValueError: Unless the grid starts at 0 and is strictly increasing.
    """
    grid = np.asarray(times, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("Time grid must be a non-empty 1-D sequence.")
    if grid[0] != 0.0:
        raise ValueError("Time grid must start at 0.")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("Time grid must be strictly increasing.")
    return grid


def validate_curve(curve: DecayCurve) -> DecayCurve:
    """
    Check shape consistency and the Mx(0) = 1 normalization.

    Raises:
        ValueError: On inconsistent arrays or a bad normalization.
    """
    validate_time_grid(curve.times)
    if not (curve.times.shape == curve.mx.shape == curve.stderr.shape):
        raise ValueError("times, mx and stderr must have the same shape.")
    if abs(curve.mx[0] - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValueError(f"Mx(0) = {curve.mx[0]!r} violates the normalization Mx(0) = 1.")
    return curve


def average_curves(curves: Sequence[DecayCurve]) -> DecayCurve:
    """
    Pointwise disorder average; the stderr is the spread across curves.
    """
    if not curves:
        raise ValueError("Nothing to average.")
    stack = np.vstack([c.mx for c in curves])
    if len(curves) > 1:
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(curves))
    else:
        stderr = curves[0].stderr.copy()
    first = curves[0]
    return DecayCurve(
        times=first.times.copy(),
        mx=stack.mean(axis=0),
        stderr=stderr,
        n_disorder=sum(c.n_disorder for c in curves),
        n_internal=first.n_internal,
        n_normal=first.n_normal,
        method=first.method,
    )


def auto_time_grid(
    concentration_ppm: float,
    n_points: int = 60,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """
    Default 2 tau grid: 0 followed by geometric points from T_est/30 to 3 T_est.

    T_est = 2 / (b n_P1) is two inverse dipolar linewidths of the bath density.
    """
    density = constants.p1_density(concentration_ppm)
    t_est = 2.0 / (constants.dipolar_prefactor_b * density)
    return np.concatenate([[0.0], np.geomspace(t_est / 30.0, 3.0 * t_est, n_points - 1)])


class BaseEchoEngine(ABC):
    """
    Abstract Base Class for Hahn-echo engines.

    Subclasses turn a bath realization and a time grid into a `DecayCurve`.
    """

    def __init__(self, name: str):
        """
        Args:
            name (str): Method label written into curves and records.
        """
        self.name = name

    @abstractmethod
    def simulate(
        self,
        system: "BathSystem",
        times: Sequence[float],
        seed: int = 0,
        realization: int = 0,
    ) -> DecayCurve:
        """
        Compute the echo decay of one bath realization.

        Args:
            system (BathSystem): Bath realization.
            times (Sequence[float]): 2 tau grid (microseconds), starting at 0.
            seed (int): Master seed of the run.
            realization (int): Realization index; part of every random-stream key.

        Returns:
            DecayCurve: Curve for this realization.
        """

    def describe(self) -> Dict[str, Any]:
        return {"method": self.name}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"
