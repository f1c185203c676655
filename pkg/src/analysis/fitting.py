"""
Stretched-Exponential Fitting Module.

Decay curves are modelled as Mx(t) = exp[-(t / T2)^p]. Taking logs twice turns
the model into the straight line

    ln(-ln Mx) = p ln t + d,    T2 = exp(-d / p)

so the fit is an ordinary least-squares line through the transformed points
of a window of the curve.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.stats import linregress

from src.core.exceptions import InsufficientDataError, UndefinedLogError
from src.engines.base import DecayCurve

logger = logging.getLogger(__name__)

# Smallest window the fit accepts
MIN_FIT_POINTS = 4

# Points at or below this coherence are dropped before any log is taken
MX_FLOOR = 1e-6

# Default auto-window levels (level_hi, level_lo)
DEFAULT_MX_WINDOW = (0.9, 0.5)

# Reported uncertainty of p never goes below this
P_ERROR_FLOOR = 0.1

# Absolute residual below which a point never counts as bending away
BENDING_NOISE_FLOOR = 1e-9


@dataclass
class FitResult:
    """
    Result of a stretched-exponential fit.

    Attributes:
        p (float): Stretch exponent (slope of the log-log line).
        t2 (float): Coherence time in microseconds, exp(-d / p).
        intercept_d (float): Intercept of the log-log line.
        window (Tuple[float, float]): First and last fitted time (microseconds).
        mx_window (Tuple[float, float]): Coherence levels that selected the window.
        residual (float): RMS residual of the linear fit.
        p_error (float): Uncertainty of p, floored at 0.1.
        n_points (int): Number of fitted points.
    """

    p: float
    t2: float
    intercept_d: float
    window: Tuple[float, float]
    mx_window: Tuple[float, float]
    residual: float
    p_error: float
    n_points: int

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["window"] = list(self.window)
        data["mx_window"] = list(self.mx_window)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitResult":
        values = dict(data)
        values["window"] = tuple(values["window"])
        values["mx_window"] = tuple(values["mx_window"])
        return cls(**values)

    def model(self, times: np.ndarray) -> np.ndarray:
        """Evaluate exp[-(t / T2)^p]."""
        return np.exp(-((np.asarray(times, dtype=float) / self.t2) ** self.p))


def _line_fit(log_t: np.ndarray, log_y: np.ndarray) -> Tuple[float, float, float, np.ndarray]:
    fit = linregress(log_t, log_y)
    residuals = log_y - (fit.slope * log_t + fit.intercept)
    return float(fit.slope), float(fit.intercept), float(fit.stderr), residuals


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values**2)))


def fit_stretched_exponential(
    curve: DecayCurve,
    window: Optional[Tuple[float, float]] = None,
    mx_window: Tuple[float, float] = DEFAULT_MX_WINDOW,
) -> FitResult:
    """
    Fit a stretched exponential to a decay curve.

    Args:
        curve (DecayCurve): Curve to fit.
        window (Optional[Tuple[float, float]]): Explicit (t_lo, t_hi) window in
            microseconds. None selects points with level_lo <= Mx <= level_hi
            and shrinks the window from the late end while the last point bends
            away from the line by more than twice the RMS residual.
        mx_window (Tuple[float, float]): (level_hi, level_lo) for the auto window.

    Returns:
        FitResult: Fitted exponent, coherence time and diagnostics.

    Raises:
        UndefinedLogError: If Mx >= 1 inside an explicit window.
        InsufficientDataError: If fewer than 4 usable points remain.
    """
    times = np.asarray(curve.times, dtype=float)
    mx = np.asarray(curve.mx, dtype=float)
    usable = (times > 0) & (mx > MX_FLOOR)

    level_hi, level_lo = mx_window
    if window is not None:
        t_lo, t_hi = window
        if t_lo >= t_hi:
            raise ValueError(f"Fit window ({t_lo}, {t_hi}) is empty.")
        selected = usable & (times >= t_lo) & (times <= t_hi)
        if np.any(mx[selected] >= 1.0):
            raise UndefinedLogError(
                f"Mx >= 1 inside the fit window ({t_lo}, {t_hi}) us; ln(-ln Mx) is undefined."
            )
    else:
        if not 0.0 < level_lo < level_hi < 1.0:
            raise ValueError(f"Auto-window levels {mx_window} must satisfy 0 < lo < hi < 1.")
        selected = usable & (mx >= level_lo) & (mx <= level_hi)

    idx = np.flatnonzero(selected)
    if idx.size < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"Only {idx.size} usable points in the fit window; need {MIN_FIT_POINTS}."
        )

    log_t = np.log(times[idx])
    log_y = np.log(-np.log(mx[idx]))
    slope, intercept, slope_err, residuals = _line_fit(log_t, log_y)

    if window is None:
        while log_t.size > MIN_FIT_POINTS:
            rms = _rms(residuals)
            if abs(residuals[-1]) <= max(2.0 * rms, BENDING_NOISE_FLOOR):
                break
            log_t, log_y = log_t[:-1], log_y[:-1]
            slope, intercept, slope_err, residuals = _line_fit(log_t, log_y)
        if log_t.size < idx.size:
            logger.debug(f"Auto window shrunk by {idx.size - log_t.size} late points.")
        idx = idx[: log_t.size]

    if slope <= 0:
        raise InsufficientDataError(f"Non-positive stretch exponent {slope:.3g}; curve does not decay.")

    p_error = max(P_ERROR_FLOOR, slope_err if math.isfinite(slope_err) else P_ERROR_FLOOR)
    return FitResult(
        p=slope,
        t2=math.exp(-intercept / slope),
        intercept_d=intercept,
        window=(float(times[idx[0]]), float(times[idx[-1]])),
        mx_window=(float(level_hi), float(level_lo)),
        residual=_rms(residuals),
        p_error=float(p_error),
        n_points=int(idx.size),
    )


def local_slope(curve: DecayCurve, mx_range: Tuple[float, float]) -> float:
    """
    Slope of ln(-ln Mx) versus ln t over the points with Mx inside `mx_range`.

    Args:
        curve (DecayCurve): Decay curve.
        mx_range (Tuple[float, float]): (level_hi, level_lo); level_hi may be 1
            (points with Mx >= 1 are never used).

    Returns:
        float: Local stretch exponent.

    Raises:
        InsufficientDataError: If fewer than 2 points fall inside the range.
    """
    level_hi, level_lo = mx_range
    times = np.asarray(curve.times, dtype=float)
    mx = np.asarray(curve.mx, dtype=float)
    mask = (times > 0) & (mx > max(level_lo, MX_FLOOR)) & (mx <= level_hi) & (mx < 1.0)
    if np.count_nonzero(mask) < 2:
        raise InsufficientDataError(f"Fewer than 2 points with Mx in {mx_range}.")
    fit = linregress(np.log(times[mask]), np.log(-np.log(mx[mask])))
    return float(fit.slope)
