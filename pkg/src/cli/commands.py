"""
Command Layer.

Each `cmd_*` function is one CLI subcommand. They load and validate the
configuration before any computation, run the pipeline, write the output files
and translate failures into exit codes:

    0  success
    1  runtime failure (the failing realization seed is logged)
    2  invalid configuration or empty input

The simulation step is injectable (`simulate=`), so orchestration can be
exercised with model curves instead of real engine runs.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.analysis.fitting import FitResult, fit_stretched_exponential
from src.analysis.scaling import SweepEntry, regime_report, row_slopes, scaling_table
from src.bath.generator import BathSystem, lattice_bath
from src.bath.io import load_bath, save_bath
from src.cli.models import ConvergenceConfig, RunConfig, SweepConfig, load_config
from src.core.config import settings
from src.core.exceptions import ConfigError, FitError, PcceError, RealizationError
from src.core.parallel import derive_seed
from src.engines.base import BaseEchoEngine, DecayCurve
from src.engines.cce.engine import ConventionalCceEngine, PcceEngine
from src.engines.ensemble import EnsembleResult, run_disorder_ensemble, run_system_ensemble
from src.engines.exact.engine import ExactEngine
from src.storage.records import (
    RunRecord,
    content_hash,
    find_run_dirs,
    is_complete,
    load_run,
    write_decay_plot_data,
    write_json,
    write_loglog_plot_data,
    write_run_outputs,
    write_scaling_plot_data,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

PathLike = Union[str, Path]

# (validated run config, worker count) -> ensemble result
Simulator = Callable[[RunConfig, int], EnsembleResult]


@dataclass
class RunOutcome:
    config: RunConfig
    record: RunRecord
    curve: DecayCurve
    fit: Optional[FitResult]
    clusters_summary: Dict[str, Any] = field(default_factory=dict)
    baths: List[BathSystem] = field(default_factory=list)


# ------------------------------------------------------------------------------
# Pipeline
# ------------------------------------------------------------------------------


def build_engine(config: RunConfig, workers: int = 1) -> BaseEchoEngine:
    method = config.method_spec
    if method.kind == "exact":
        return ExactEngine(config.exact)
    cce = config.cce_config(workers=workers)
    if method.kind == "cce":
        return ConventionalCceEngine(cce)
    return PcceEngine(cce)


def simulate_config(config: RunConfig, workers: int = 1) -> EnsembleResult:
    """
    Run the configured engine over the configured bath ensemble.

    Several realizations are spread over the workers; a single realization
    spreads its clusters instead.
    """
    n_realizations = config.ensemble.n_realizations
    master_seed = config.ensemble.master_seed
    ensemble_workers = workers if n_realizations > 1 else 1
    engine = build_engine(config, workers=1 if n_realizations > 1 else workers)
    times = config.times()

    if config.bath.kind == "lattice":
        assert config.bath.n_side is not None
        systems = [
            lattice_bath(
                config.bath.n_side,
                config.bath.spacing,
                config.bath.hyperfine_mode,
                n_spins=config.bath.n_spins,
                seed=derive_seed(master_seed, r),
            )
            for r in range(n_realizations)
        ]
        return run_system_ensemble(systems, engine, times, master_seed, ensemble_workers)

    if config.bath.kind == "file":
        assert config.bath.files is not None
        systems = [load_bath(path) for path in config.bath.files]
        return run_system_ensemble(systems, engine, times, master_seed, ensemble_workers)

    return run_disorder_ensemble(
        config.bath_spec(),
        engine,
        times,
        n_realizations=n_realizations,
        master_seed=master_seed,
        min_dynamic_spins=config.bath.min_dynamic_spins,
        workers=ensemble_workers,
        truncate_to=config.bath.truncate_to,
    )


def config_hash(config: RunConfig) -> str:
    """Content hash of everything that determines the outputs."""
    return content_hash(config.model_dump(mode="json", exclude={"output_dir", "name"}))


def summarize_clusters(result: EnsembleResult) -> Dict[str, Any]:
    realizations = []
    for outcome in result.realizations:
        realizations.append(
            {
                "index": outcome.index,
                "bath_seed": outcome.bath_seed,
                "n_spins": outcome.system.n_spins,
                "n_dynamic": outcome.system.n_dynamic,
                "diagnostics": outcome.curve.metadata,
            }
        )
    fractions = [
        o.curve.metadata["unphysical_fraction"]
        for o in result.realizations
        if "unphysical_fraction" in o.curve.metadata
    ]
    return {
        "method": result.curve.method,
        "mean_unphysical_fraction": float(np.mean(fractions)) if fractions else None,
        "realizations": realizations,
    }


def fit_curve(config: RunConfig, curve: DecayCurve) -> Tuple[Optional[FitResult], Optional[str]]:
    try:
        fit = fit_stretched_exponential(
            curve, window=config.fit.explicit_window, mx_window=config.fit.mx_window
        )
    except FitError as e:
        logger.warning(f"Stretched-exponential fit failed: {e}")
        return None, str(e)
    logger.info(f"Fit: p = {fit.p:.3f} +/- {fit.p_error:.2f}, T2 = {fit.t2:.4g} us.")
    return fit, None


def execute_run(
    config: RunConfig, workers: int = 1, simulate: Optional[Simulator] = None
) -> RunOutcome:
    """Simulate, fit and assemble the run record (nothing is written)."""
    result = (simulate or simulate_config)(config, workers)
    curve = result.curve
    fit, fit_error = fit_curve(config, curve)
    record = RunRecord(
        config=config.model_dump(mode="json"),
        config_hash=config_hash(config),
        method=curve.method or config.method,
        master_seed=config.ensemble.master_seed,
        n_realizations=config.ensemble.n_realizations,
        seeds=result.seeds,
        fit=fit.to_dict() if fit is not None else None,
        fit_error=fit_error,
        diagnostics={
            "mx_final": float(curve.mx[-1]),
            "max_stderr": float(np.max(curve.stderr)),
            "n_time_points": int(curve.times.size),
        },
    )
    baths = [r.system for r in result.realizations] if config.ensemble.save_baths else []
    return RunOutcome(config, record, curve, fit, summarize_clusters(result), baths)


def write_outcome(outcome: RunOutcome, run_dir: PathLike) -> Path:
    write_run_outputs(run_dir, outcome.record, outcome.curve, outcome.fit, outcome.clusters_summary)
    for index, system in enumerate(outcome.baths):
        save_bath(system, Path(run_dir) / "baths" / f"bath_{index:03d}.json")
    return Path(run_dir)


def _with_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    return config if seed is None else config.with_updates({"ensemble.master_seed": seed})


def _workers(workers: Optional[int]) -> int:
    return max(1, workers if workers is not None else settings.WORKERS)


def _fail(error: Exception) -> int:
    if isinstance(error, RealizationError):
        logger.error(
            f"Run failed in realization {error.realization} (bath seed {error.seed}): {error}"
        )
    else:
        logger.error(f"Run failed: {error}")
    return EXIT_RUNTIME


# ------------------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------------------


def cmd_run(
    config_path: PathLike,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out: Optional[PathLike] = None,
    simulate: Optional[Simulator] = None,
) -> int:
    """
    Execute one run configuration and write record.json, curve.csv, fit.json
    and clusters_summary.json.
    """
    try:
        loaded = load_config(config_path, "run")
        assert isinstance(loaded, RunConfig)
        config = _with_seed(loaded, seed)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    digest = config_hash(config)
    if out is not None:
        run_dir = Path(out)
    else:
        run_dir = Path(config.output_dir or settings.OUTPUT_DIR) / (config.name or f"run-{digest[:12]}")

    try:
        outcome = execute_run(config, _workers(workers), simulate)
        write_outcome(outcome, run_dir)
    except (PcceError, ValueError, OSError) as e:
        return _fail(e)
    return EXIT_OK


def cell_name(mode: str, thickness: float, rho: float) -> str:
    return f"{mode}_L{thickness:g}_rho{rho:g}"


def _entry_from_disk(cell_dir: Path, mode: str, thickness: float, rho: float) -> SweepEntry:
    record, _ = load_run(cell_dir)
    fit = FitResult.from_dict(record.fit) if record.fit is not None else None
    return SweepEntry(thickness, rho, mode, fit)


def aggregate_sweep(entries: Sequence[SweepEntry], out_dir: PathLike) -> pd.DataFrame:
    """Write scaling.csv, scaling.json and regime_report.csv; return the scaling table."""
    target = Path(out_dir)
    slopes = row_slopes(entries)
    table = scaling_table(entries, slopes)
    target.mkdir(parents=True, exist_ok=True)
    table.to_csv(target / "scaling.csv", index=False, lineterminator="\n")

    write_json(
        {
            "rows": [
                {
                    "L": key[0],
                    "mode": key[1],
                    "complete": result is not None,
                    "scaling": result.to_dict() if result is not None else None,
                }
                for key, result in slopes.items()
            ]
        },
        target / "scaling.json",
    )

    report = regime_report(entries)
    if not report.empty:
        flat = report.copy()
        flat.columns = [f"{quantity}_rho{rho:g}" for quantity, rho in report.columns]
        flat.to_csv(target / "regime_report.csv", lineterminator="\n")
    return table


def cmd_sweep(
    config_path: PathLike,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out: Optional[PathLike] = None,
    resume: bool = False,
    simulate: Optional[Simulator] = None,
) -> int:
    """
    Run a concentration x thickness grid and aggregate T2 scaling and the
    table of stretch exponents. With `resume`, cells whose record carries the
    same content hash are loaded instead of recomputed.
    """
    try:
        sweep = load_config(config_path, "sweep")
        assert isinstance(sweep, SweepConfig)
        cells = [(m, L, rho, _with_seed(c, seed)) for m, L, rho, c in sweep.cells()]
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    out_dir = Path(out or sweep.output_dir or Path(settings.OUTPUT_DIR) / "sweep")
    n_workers = _workers(workers)
    entries: List[SweepEntry] = []
    failures = 0

    for mode, thickness, rho, config in cells:
        cell_dir = out_dir / "cells" / cell_name(mode, thickness, rho)
        if resume and is_complete(cell_dir, config_hash(config)):
            logger.info(f"Cell {cell_dir.name} already complete; skipping.")
            entries.append(_entry_from_disk(cell_dir, mode, thickness, rho))
            continue
        logger.info(f"Running cell {cell_dir.name}.")
        try:
            outcome = execute_run(config, n_workers, simulate)
            write_outcome(outcome, cell_dir)
        except (PcceError, ValueError, OSError) as e:
            _fail(e)
            failures += 1
            entries.append(SweepEntry(thickness, rho, mode, None))
            continue
        entries.append(SweepEntry(thickness, rho, mode, outcome.fit))

    aggregate_sweep(entries, out_dir)
    logger.info(f"Sweep finished: {len(cells) - failures}/{len(cells)} cells succeeded.")
    return EXIT_RUNTIME if failures else EXIT_OK


def convergence_table(
    curves: Sequence[Tuple[float, DecayCurve]], reference: DecayCurve
) -> pd.DataFrame:
    """
    Max deviation of every curve from the reference, next to the ensemble
    standard errors of both.
    """
    rows = []
    for value, curve in curves:
        if curve.mx.shape != reference.mx.shape or not np.allclose(curve.times, reference.times):
            raise ValueError(f"Curve for axis value {value:g} uses a different time grid.")
        deviation = np.abs(curve.mx - reference.mx)
        combined = np.sqrt(curve.stderr**2 + reference.stderr**2)
        rows.append(
            {
                "value": value,
                "max_deviation": float(deviation.max()),
                "max_stderr": float(combined.max()),
                "within_stderr": bool(np.all(deviation <= combined)),
            }
        )
    return pd.DataFrame(rows, columns=["value", "max_deviation", "max_stderr", "within_stderr"])


def cmd_convergence(
    config_path: PathLike,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out: Optional[PathLike] = None,
    simulate: Optional[Simulator] = None,
) -> int:
    """
    Vary one axis (K, rb, rd or internal_samples) of a base run and tabulate
    the max curve deviation against the largest axis value or an exact run.
    """
    try:
        study = load_config(config_path, "convergence")
        assert isinstance(study, ConvergenceConfig)
        runs = [(value, _with_seed(study.config_for(value), seed)) for value in study.values]
        exact = _with_seed(study.exact_config(), seed) if study.reference == "exact" else None
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    out_dir = Path(out or study.output_dir or Path(settings.OUTPUT_DIR) / f"convergence-{study.axis}")
    n_workers = _workers(workers)
    curves: List[Tuple[float, DecayCurve]] = []
    try:
        for value, config in runs:
            outcome = execute_run(config, n_workers, simulate)
            write_outcome(outcome, out_dir / f"{study.axis}={value:g}")
            curves.append((value, outcome.curve))
        if exact is not None:
            reference_outcome = execute_run(exact, n_workers, simulate)
            write_outcome(reference_outcome, out_dir / "exact")
            reference = reference_outcome.curve
        else:
            reference = max(curves, key=lambda item: item[0])[1]
        table = convergence_table(curves, reference)
    except (PcceError, ValueError, OSError) as e:
        return _fail(e)

    table.to_csv(out_dir / "deviations.csv", index=False, lineterminator="\n")
    write_json(
        {
            "axis": study.axis,
            "reference": study.reference,
            "values": study.values,
            "deviations": table.to_dict(orient="records"),
        },
        out_dir / "convergence.json",
    )
    for row in table.itertuples():
        logger.info(
            f"{study.axis} = {row.value:g}: max |dMx| = {row.max_deviation:.3e} "
            f"(stderr {row.max_stderr:.3e})."
        )
    return EXIT_OK


def cmd_plot(paths: Sequence[PathLike], out: Optional[PathLike] = None) -> int:
    """
    Write gnuplot data for every run record under `paths`: decay.dat,
    loglog.dat per run and scaling.dat for the whole set.
    """
    run_dirs = find_run_dirs(paths)
    if not run_dirs:
        logger.error(f"No run records found under {[str(p) for p in paths]}.")
        return EXIT_CONFIG

    out_dir = Path(out or Path(settings.OUTPUT_DIR) / "plots")
    entries: List[SweepEntry] = []
    try:
        for position, run_dir in enumerate(run_dirs):
            record, curve = load_run(run_dir)
            fit = FitResult.from_dict(record.fit) if record.fit is not None else None
            target = out_dir / f"{position:03d}_{run_dir.name}"
            write_decay_plot_data(curve, target / "decay.dat")
            write_loglog_plot_data(curve, target / "loglog.dat", fit)
            bath = record.config.get("bath", {})
            if bath.get("kind", "random") == "random" and bath.get("concentration_ppm"):
                entries.append(
                    SweepEntry(
                        float(bath["layer_thickness_L"]),
                        float(bath["concentration_ppm"]),
                        str(bath.get("hyperfine_mode", "p1")),
                        fit,
                    )
                )
    except (ValueError, KeyError, OSError) as e:
        logger.error(f"Cannot read run records: {e}")
        return EXIT_CONFIG

    if entries:
        write_scaling_plot_data(scaling_table(entries), out_dir / "scaling.dat")
    logger.info(f"Plot data for {len(run_dirs)} runs written to {out_dir}.")
    return EXIT_OK


def cmd_validate(config_path: PathLike) -> int:
    """Validate any configuration document without computing anything."""
    try:
        config = load_config(config_path)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG

    if isinstance(config, SweepConfig):
        logger.info(f"Valid sweep configuration with {len(config.cells())} cells.")
    elif isinstance(config, ConvergenceConfig):
        logger.info(
            f"Valid convergence configuration: axis {config.axis}, values {config.values}, "
            f"reference {config.reference}."
        )
    else:
        logger.info(
            f"Valid run configuration: method {config.method}, "
            f"{config.ensemble.n_realizations} realizations."
        )
    return EXIT_OK
