"""
Run Records and Output Files.

Every run writes one directory:

    record.json            configuration, content hash, seeds, summary
    curve.csv              time_us,mx,stderr
    fit.json               stretched-exponential fit (or the fit failure)
    clusters_summary.json  cluster counts and unphysical fraction

Files carry no timestamps, so rerunning the same configuration reproduces
them byte for byte. Plot data is written as whitespace-separated columns with
a `#` header, ready for gnuplot.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.analysis.fitting import FitResult
from src.engines.base import DecayCurve

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RECORD_FILE = "record.json"
CURVE_FILE = "curve.csv"
FIT_FILE = "fit.json"
CLUSTERS_FILE = "clusters_summary.json"

RECORD_FORMAT_VERSION = 1


def _to_builtin(value: Any) -> Any:
    """json.dumps fallback for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_to_builtin)


def content_hash(data: Any) -> str:
    """SHA-256 of the canonical JSON form of `data`."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def write_json(data: Any, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, indent=2, sort_keys=True, default=_to_builtin, allow_nan=True)
    target.write_text(text + "\n", encoding="utf-8")
    return target


def read_json(path: PathLike) -> Any:
    source = Path(path)
    try:
        return json.loads(source.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"Cannot read JSON file {source}: {e}") from e


def write_curve_csv(curve: DecayCurve, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    curve.to_frame().to_csv(target, index=False, lineterminator="\n")
    return target


def read_curve_csv(path: PathLike, **kwargs: Any) -> DecayCurve:
    source = Path(path)
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValueError(f"Cannot read curve file {source}: {e}") from e
    return DecayCurve.from_frame(frame, **kwargs)


@dataclass
class RunRecord:
    """
    Summary of one executed configuration.

    Attributes:
        config (Dict[str, Any]): Fully validated configuration (defaults filled in).
        config_hash (str): Content hash of `config`; keys sweep cells.
        method (str): Engine label.
        master_seed (int): Seed of the ensemble.
        n_realizations (int): Disorder realizations averaged.
        seeds (List[int]): Bath seed of every realization.
        fit (Optional[Dict[str, Any]]): Fit summary, None if the fit failed.
        fit_error (Optional[str]): Fit failure message.
        diagnostics (Dict[str, Any]): Engine metadata of the averaged curve.
    """

    config: Dict[str, Any]
    config_hash: str
    method: str
    master_seed: int
    n_realizations: int
    seeds: List[int] = field(default_factory=list)
    fit: Optional[Dict[str, Any]] = None
    fit_error: Optional[str] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": RECORD_FORMAT_VERSION,
            "config": self.config,
            "config_hash": self.config_hash,
            "method": self.method,
            "master_seed": self.master_seed,
            "n_realizations": self.n_realizations,
            "seeds": list(self.seeds),
            "fit": self.fit,
            "fit_error": self.fit_error,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        if data.get("format_version") != RECORD_FORMAT_VERSION:
            raise ValueError(f"Unsupported record format version: {data.get('format_version')}")
        return cls(
            config=data["config"],
            config_hash=data["config_hash"],
            method=data["method"],
            master_seed=data["master_seed"],
            n_realizations=data["n_realizations"],
            seeds=list(data.get("seeds", [])),
            fit=data.get("fit"),
            fit_error=data.get("fit_error"),
            diagnostics=data.get("diagnostics", {}),
        )


def write_run_outputs(
    run_dir: PathLike,
    record: RunRecord,
    curve: DecayCurve,
    fit: Optional[FitResult] = None,
    clusters_summary: Optional[Dict[str, Any]] = None,
) -> Dict[str, Path]:
    """
    Write the per-run file set. The record is written last, so its presence
    marks a completed run.
    """
    directory = Path(run_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written = {"curve": write_curve_csv(curve, directory / CURVE_FILE)}
    fit_payload: Dict[str, Any] = fit.to_dict() if fit is not None else {"error": record.fit_error}
    written["fit"] = write_json(fit_payload, directory / FIT_FILE)
    written["clusters_summary"] = write_json(clusters_summary or {}, directory / CLUSTERS_FILE)
    written["record"] = write_json(record.to_dict(), directory / RECORD_FILE)
    logger.info(f"Wrote run outputs to {directory}")
    return written


def is_complete(run_dir: PathLike, config_hash: str) -> bool:
    """True when `run_dir` holds a finished record of the same configuration."""
    record_path = Path(run_dir) / RECORD_FILE
    if not record_path.exists() or not (Path(run_dir) / CURVE_FILE).exists():
        return False
    try:
        return bool(read_json(record_path).get("config_hash") == config_hash)
    except ValueError:
        return False


def load_run(run_dir: PathLike) -> Tuple[RunRecord, DecayCurve]:
    directory = Path(run_dir)
    record = RunRecord.from_dict(read_json(directory / RECORD_FILE))
    curve = read_curve_csv(directory / CURVE_FILE, method=record.method)
    return record, curve


def find_run_dirs(paths: Iterable[PathLike]) -> List[Path]:
    """Directories under `paths` (searched recursively) that hold a record.json."""
    found = set()
    for path in paths:
        root = Path(path)
        if root.is_file() and root.name == RECORD_FILE:
            found.add(root.parent)
        elif root.is_dir():
            found.update(p.parent for p in root.rglob(RECORD_FILE))
    return sorted(found)


# ------------------------------------------------------------------------------
# Plot data
# ------------------------------------------------------------------------------


def _write_columns(path: PathLike, header: List[str], rows: np.ndarray, note: str = "") -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if note:
        lines.append(f"# {note}")
    lines.append("# " + " ".join(header))
    if rows.size:
        for row in np.atleast_2d(rows):
            lines.append(" ".join(repr(float(v)) for v in row))
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def write_decay_plot_data(curve: DecayCurve, path: PathLike) -> Path:
    """Mx versus total echo time 2 tau."""
    rows = np.column_stack([curve.times, curve.mx, curve.stderr])
    return _write_columns(path, ["time_us", "mx", "stderr"], rows, note=curve.method)


def loglog_points(curve: DecayCurve) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    (ln t, ln(-ln Mx)) for every point where the double log is defined.

    Returns:
        Tuple[np.ndarray, np.ndarray, int]: x, y and the number of skipped points
        with t > 0 (Mx >= 1 or Mx <= 0).
    """
    positive = curve.times > 0
    defined = positive & (curve.mx < 1.0) & (curve.mx > 0.0)
    skipped = int(np.count_nonzero(positive & ~defined))
    x = np.log(curve.times[defined])
    y = np.log(-np.log(curve.mx[defined]))
    return x, y, skipped


def write_loglog_plot_data(
    curve: DecayCurve, path: PathLike, fit: Optional[FitResult] = None
) -> Tuple[Path, int]:
    """
    ln(-ln Mx) versus ln t with a fit-line overlay column (nan without a fit).

    Returns:
        Tuple[Path, int]: Written file and the number of skipped points.
    """
    x, y, skipped = loglog_points(curve)
    if skipped:
        logger.warning(f"Skipped {skipped} points with Mx >= 1 or Mx <= 0 in the log-log data.")
    line = fit.p * x + fit.intercept_d if fit is not None else np.full(x.shape, math.nan)
    note = f"{curve.method} p={fit.p!r} T2_us={fit.t2!r}" if fit is not None else curve.method
    target = _write_columns(
        path, ["ln_t", "ln_neg_ln_mx", "fit_line"], np.column_stack([x, y, line]), note=note
    )
    return target, skipped


def write_scaling_plot_data(table: pd.DataFrame, path: PathLike) -> Path:
    """
    log10 T2 versus log10 rho; one gnuplot data block per (mode, L) row.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    blocks = []
    usable = table.dropna(subset=["T2_us"])
    for (mode, thickness), rows in usable.groupby(["mode", "L"], sort=True):
        rows = rows.sort_values("rho_ppm")
        lines = [f"# mode={mode} L={thickness!r} slope={float(rows['slope'].iloc[0])!r}"]
        lines.append("# log10_rho log10_T2 p p_err")
        for _, r in rows.iterrows():
            values = [
                math.log10(r["rho_ppm"]),
                math.log10(r["T2_us"]),
                float(r["p"]),
                float(r["p_err"]),
            ]
            lines.append(" ".join(repr(float(v)) for v in values))
        blocks.append("\n".join(lines))
    # Two blank lines separate gnuplot index blocks
    target.write_text("\n\n\n".join(blocks) + "\n", encoding="utf-8")
    return target
