"""
Concentration Scaling Module.

Aggregates per-cell fits of a (concentration x layer thickness x hyperfine
mode) sweep into T2 scaling exponents and the table of stretch exponents.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress

from src.analysis.fitting import P_ERROR_FLOOR, FitResult
from src.core.exceptions import InsufficientDataError

logger = logging.getLogger(__name__)

MIN_SCALING_POINTS = 3

SCALING_COLUMNS = ["L", "rho_ppm", "mode", "p", "p_err", "T2_us", "slope"]


@dataclass
class ScalingResult:
    """
    Least-squares line of log T2 versus log rho at one layer thickness.

    Attributes:
        slope (float): d log T2 / d log rho.
        intercept (float): Intercept of the line (natural logs).
        points (pd.DataFrame): Per-concentration table (rho_ppm, T2_us, p).
        layer_thickness (float): L in nanometres.
        mode (str): Hyperfine mode of the row.
    """

    slope: float
    intercept: float
    points: pd.DataFrame
    layer_thickness: float
    mode: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "layer_thickness_L": self.layer_thickness,
            "mode": self.mode,
            "points": self.points.to_dict(orient="records"),
        }


@dataclass
class SweepEntry:
    """
    One cell of a sweep grid; `fit` is None when the cell failed or is missing.
    """

    layer_thickness: float
    concentration_ppm: float
    mode: str
    fit: Optional[FitResult] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def scaling_exponent(
    fits: Sequence[Tuple[float, FitResult]], layer_thickness: float, mode: str = ""
) -> ScalingResult:
    """
    Slope of log T2 versus log rho.

    Args:
        fits (Sequence[Tuple[float, FitResult]]): (rho_ppm, fit) pairs.
        layer_thickness (float): L of the row (nm).
        mode (str): Hyperfine mode label.

    Returns:
        ScalingResult: Fitted slope and the per-point table.

    Raises:
        InsufficientDataError: With fewer than 3 distinct concentrations.
    """
    rhos = np.array([rho for rho, _ in fits], dtype=float)
    if np.unique(rhos).size < MIN_SCALING_POINTS:
        raise InsufficientDataError(
            f"Scaling needs {MIN_SCALING_POINTS} concentrations, got {np.unique(rhos).size}."
        )
    t2 = np.array([fit.t2 for _, fit in fits], dtype=float)
    line = linregress(np.log(rhos), np.log(t2))
    points = pd.DataFrame(
        {"rho_ppm": rhos, "T2_us": t2, "p": [fit.p for _, fit in fits]}
    ).sort_values("rho_ppm", ignore_index=True)
    return ScalingResult(
        slope=float(line.slope),
        intercept=float(line.intercept),
        points=points,
        layer_thickness=float(layer_thickness),
        mode=mode,
    )


def row_slopes(entries: Sequence[SweepEntry]) -> Dict[Tuple[float, str], Optional[ScalingResult]]:
    """
    Scaling result per (L, mode) row; incomplete rows map to None.

    A row is complete when every concentration that appears anywhere in the
    grid has a fit in that row and there are at least 3 of them.
    """
    grid_rhos = sorted({e.concentration_ppm for e in entries})
    rows: Dict[Tuple[float, str], List[SweepEntry]] = {}
    for entry in entries:
        rows.setdefault((entry.layer_thickness, entry.mode), []).append(entry)

    results: Dict[Tuple[float, str], Optional[ScalingResult]] = {}
    for key in sorted(rows):
        fitted = {e.concentration_ppm: e.fit for e in rows[key] if e.fit is not None}
        missing = [rho for rho in grid_rhos if rho not in fitted]
        if missing or len(fitted) < MIN_SCALING_POINTS:
            logger.warning(
                f"Row L = {key[0]} nm, mode = {key[1]} is incomplete (missing rho: {missing}); "
                "no slope computed."
            )
            results[key] = None
            continue
        results[key] = scaling_exponent(
            [(rho, fitted[rho]) for rho in grid_rhos], key[0], key[1]
        )
    return results


def regime_report(entries: Sequence[SweepEntry]) -> pd.DataFrame:
    """
    Matrix of stretch exponents: rows (mode, L), columns rho.

    Missing or failed cells are NaN, never interpolated. The error of every
    value is max(fit error, 0.1) and sits in the "p_err" column block.

    Returns:
        pd.DataFrame: Columns MultiIndex (quantity in {"p", "p_err"}, rho_ppm).
    """
    records = [
        {
            "mode": e.mode,
            "L": e.layer_thickness,
            "rho_ppm": e.concentration_ppm,
            "p": e.fit.p if e.fit is not None else np.nan,
            "p_err": max(e.fit.p_error, P_ERROR_FLOOR) if e.fit is not None else np.nan,
        }
        for e in entries
    ]
    if not records:
        return pd.DataFrame()
    frame = pd.DataFrame.from_records(records)
    index = pd.MultiIndex.from_product(
        [sorted(frame["mode"].unique()), sorted(frame["L"].unique())], names=["mode", "L"]
    )
    columns = sorted(frame["rho_ppm"].unique())
    blocks = {
        quantity: frame.pivot_table(
            index=["mode", "L"], columns="rho_ppm", values=quantity, aggfunc="first", dropna=False
        ).reindex(index=index, columns=columns)
        for quantity in ("p", "p_err")
    }
    report = pd.concat(blocks, axis=1)
    absent = int(report["p"].isna().to_numpy().sum())
    if absent:
        logger.warning(f"Regime report has {absent} absent cells.")
    return report


def scaling_table(
    entries: Sequence[SweepEntry],
    slopes: Optional[Dict[Tuple[float, str], Optional[ScalingResult]]] = None,
) -> pd.DataFrame:
    """
    Flat table with one row per sweep cell: L, rho_ppm, mode, p, p_err, T2_us, slope.
    """
    slopes = row_slopes(entries) if slopes is None else slopes
    rows = []
    for e in sorted(entries, key=lambda x: (x.mode, x.layer_thickness, x.concentration_ppm)):
        row_fit = slopes.get((e.layer_thickness, e.mode))
        rows.append(
            {
                "L": e.layer_thickness,
                "rho_ppm": e.concentration_ppm,
                "mode": e.mode,
                "p": e.fit.p if e.fit else math.nan,
                "p_err": max(e.fit.p_error, P_ERROR_FLOOR) if e.fit else math.nan,
                "T2_us": e.fit.t2 if e.fit else math.nan,
                "slope": row_fit.slope if row_fit is not None else math.nan,
            }
        )
    return pd.DataFrame(rows, columns=SCALING_COLUMNS)
