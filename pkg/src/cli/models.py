"""
Configuration Documents.

Run, sweep and convergence configurations are pydantic models with
`extra="forbid"`, so a typo in a physics parameter is an error rather than a
silently ignored key. Documents are JSON (the canonical format) or YAML; both
are read with `yaml.safe_load`.
"""

import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.bath.generator import BathSpec, HyperfineMode, shell_thickness_for
from src.core.exceptions import ConfigError
from src.engines.base import auto_time_grid
from src.engines.cce.clusters import dipole_radius
from src.engines.cce.config import CceConfig
from src.engines.exact.config import ExactConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_METHOD_PATTERN = re.compile(r"^\s*(pcce)\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$|^\s*(cce)\(\s*(\d+)\s*\)\s*$|^\s*(exact)\s*$")


class MethodSpec(BaseModel):
    """Parsed method string: pcce(N,K), cce(N) or exact."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["pcce", "cce", "exact"]
    order_N: int = 0
    partition_size_K: int = 1

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        match = _METHOD_PATTERN.match(text.lower())
        if match is None:
            raise ValueError(f"method must be pcce(N,K), cce(N) or exact, got {text!r}")
        if match.group(1):
            order, size = int(match.group(2)), int(match.group(3))
            if order < 1 or size < 1:
                raise ValueError("pcce(N,K) needs N >= 1 and K >= 1")
            return cls(kind="pcce", order_N=order, partition_size_K=size)
        if match.group(4):
            order = int(match.group(5))
            if order < 1:
                raise ValueError("cce(N) needs N >= 1")
            return cls(kind="cce", order_N=order)
        return cls(kind="exact")

    @property
    def label(self) -> str:
        if self.kind == "pcce":
            return f"pcce({self.order_N},{self.partition_size_K})"
        if self.kind == "cce":
            return f"cce({self.order_N})"
        return "exact"


class BathSection(BaseModel):
    """
    Bath of every realization: random P1 baths (optionally truncated to the
    nearest spins), a square-lattice benchmark, or baths saved by an earlier run.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["random", "lattice", "file"] = "random"

    # random baths
    concentration_ppm: Optional[float] = Field(default=None, gt=0)
    layer_thickness_L: Optional[float] = Field(default=None, gt=0)
    bath_radius_rb: float = Field(default=60.0, gt=0)
    # None: 2/3 of the dipole radius
    shell_thickness: Optional[float] = Field(default=None, ge=0)
    hyperfine_mode: HyperfineMode = "p1"
    placement: Literal["poisson", "enumerate"] = "poisson"
    min_dynamic_spins: int = Field(default=140, ge=1)
    truncate_to: Optional[int] = Field(default=None, ge=1)

    # lattice baths
    n_side: Optional[int] = Field(default=None, ge=1)
    spacing: float = Field(default=20.0, gt=0)
    n_spins: Optional[int] = Field(default=None, ge=1)

    # saved baths, one realization per file
    files: Optional[List[str]] = Field(default=None, min_length=1)

    @model_validator(mode="after")
    def _check_kind(self) -> "BathSection":
        if self.kind == "random":
            if self.concentration_ppm is None or self.layer_thickness_L is None:
                raise ValueError("random baths need concentration_ppm and layer_thickness_L")
        elif self.kind == "lattice" and self.n_side is None:
            raise ValueError("lattice baths need n_side")
        elif self.kind == "file" and not self.files:
            raise ValueError("file baths need files")
        return self

    def to_spec(self, dipole_radius_rd: float) -> BathSpec:
        assert self.concentration_ppm is not None and self.layer_thickness_L is not None
        shell = (
            self.shell_thickness
            if self.shell_thickness is not None
            else shell_thickness_for(dipole_radius_rd)
        )
        return BathSpec(
            concentration_ppm=self.concentration_ppm,
            layer_thickness_L=self.layer_thickness_L,
            bath_radius_rb=self.bath_radius_rb,
            shell_thickness=shell,
            hyperfine_mode=self.hyperfine_mode,
            placement=self.placement,
        )


class EnsembleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_realizations: int = Field(default=1, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    # write every realization's bath to baths/ in the run directory
    save_baths: bool = False


class FitSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    window_mode: Literal["auto", "explicit"] = "auto"
    window: Optional[Tuple[float, float]] = None
    mx_window: Tuple[float, float] = (0.9, 0.5)

    @model_validator(mode="after")
    def _check_window(self) -> "FitSection":
        if self.window_mode == "explicit":
            if self.window is None:
                raise ValueError("explicit window_mode needs window: [t_lo, t_hi]")
            if not 0 <= self.window[0] < self.window[1]:
                raise ValueError("window must satisfy 0 <= t_lo < t_hi")
        hi, lo = self.mx_window
        if not 0 < lo < hi < 1:
            raise ValueError("mx_window must be [level_hi, level_lo] with 0 < lo < hi < 1")
        return self

    @property
    def explicit_window(self) -> Optional[Tuple[float, float]]:
        return self.window if self.window_mode == "explicit" else None


class RunConfig(BaseModel):
    """
    One simulation: bath, method, ensemble, fit and output location.
    """

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    name: Optional[str] = None
    bath: BathSection
    method: str
    cce: CceConfig = Field(default_factory=CceConfig)
    exact: ExactConfig = Field(default_factory=ExactConfig)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    fit: FitSection = Field(default_factory=FitSection)
    time_grid: Optional[List[float]] = None
    n_time_points: int = Field(default=60, ge=2)
    output_dir: Optional[str] = None

    @field_validator("method")
    @classmethod
    def _check_method(cls, value: str) -> str:
        return MethodSpec.parse(value).label

    @field_validator("time_grid")
    @classmethod
    def _check_time_grid(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is None:
            return value
        if not value or value[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("time grid must be strictly increasing")
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        method = self.method_spec
        fixed = self.cce.model_fields_set & {"order_N", "partition_size_K"}
        if method.kind != "exact" and fixed:
            raise ValueError(f"cce.{sorted(fixed)[0]} is set by the method string; remove it")
        if method.kind == "cce" and method.order_N > 3:
            raise ValueError("conventional cce(N) supports N <= 3")
        if self.bath.kind != "random":
            kind = self.bath.kind
            if self.grid_override is None:
                raise ValueError(f"{kind} baths need an explicit time_grid")
            if method.kind != "exact" and self.cce.dipole_radius_rd is None:
                raise ValueError(f"{kind} baths need cce.dipole_radius_rd")
            if kind == "file" and self.ensemble.n_realizations != len(self.bath.files or []):
                raise ValueError("ensemble.n_realizations must equal the number of bath files")
        return self

    @property
    def method_spec(self) -> MethodSpec:
        return MethodSpec.parse(self.method)

    @property
    def grid_override(self) -> Optional[List[float]]:
        return self.time_grid if self.time_grid is not None else self.cce.time_grid

    def cce_config(self, workers: Optional[int] = None) -> CceConfig:
        """
        CceConfig for the method: default sample counts of pCCE(N, K) overridden
        by every field set explicitly in the `cce` section.
        """
        method = self.method_spec
        overrides = {
            key: getattr(self.cce, key)
            for key in self.cce.model_fields_set
            if key not in ("order_N", "partition_size_K")
        }
        if workers is not None:
            overrides["workers"] = workers
        size = method.partition_size_K if method.kind == "pcce" else 1
        return CceConfig.for_partition_size(method.order_N, size, **overrides)

    def dipole_radius(self) -> float:
        if self.cce.dipole_radius_rd is not None:
            return self.cce.dipole_radius_rd
        assert self.bath.concentration_ppm is not None and self.bath.layer_thickness_L is not None
        return dipole_radius(
            self.bath.layer_thickness_L, self.bath.concentration_ppm, self.cce.rd_base_r_d1
        )

    def bath_spec(self) -> BathSpec:
        return self.bath.to_spec(self.dipole_radius())

    def times(self) -> np.ndarray:
        grid = self.grid_override
        if grid is not None:
            return np.asarray(grid, dtype=float)
        assert self.bath.concentration_ppm is not None
        return auto_time_grid(self.bath.concentration_ppm, self.n_time_points)

    def with_updates(self, updates: Dict[str, Any]) -> "RunConfig":
        """
        Revalidated copy with dotted-path updates, e.g. {"bath.concentration_ppm": 2.0}.
        """
        data = self.model_dump(exclude_unset=True)
        for path, value in updates.items():
            node = data
            keys = path.split(".")
            for key in keys[:-1]:
                node = node.setdefault(key, {})
            node[keys[-1]] = value
        return RunConfig.model_validate(data)


class SweepConfig(BaseModel):
    """
    Grid of concentrations x layer thicknesses (x hyperfine modes) sharing one
    base run configuration.
    """

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    base: RunConfig
    concentrations_ppm: List[float] = Field(min_length=1)
    layer_thicknesses_L: List[float] = Field(min_length=1)
    hyperfine_modes: List[HyperfineMode] = Field(default_factory=lambda: ["p1"])
    output_dir: Optional[str] = None

    @field_validator("concentrations_ppm", "layer_thicknesses_L")
    @classmethod
    def _check_positive(cls, value: List[float]) -> List[float]:
        if any(v <= 0 for v in value):
            raise ValueError("grid values must be positive")
        if len(set(value)) != len(value):
            raise ValueError("grid values must be distinct")
        return value

    @model_validator(mode="after")
    def _check_base(self) -> "SweepConfig":
        if self.base.bath.kind != "random":
            raise ValueError("sweeps need a random bath in the base configuration")
        if len(self.concentrations_ppm) < 3:
            logger.warning("Fewer than 3 concentrations: no scaling slopes will be computed.")
        return self

    def cells(self) -> List[Tuple[str, float, float, RunConfig]]:
        """(mode, L, rho, config) for every grid cell, in a fixed order."""
        out = []
        for mode in self.hyperfine_modes:
            for thickness in self.layer_thicknesses_L:
                for rho in self.concentrations_ppm:
                    config = self.base.with_updates(
                        {
                            "bath.concentration_ppm": rho,
                            "bath.layer_thickness_L": thickness,
                            "bath.hyperfine_mode": mode,
                        }
                    )
                    out.append((mode, thickness, rho, config))
        return out


ConvergenceAxis = Literal["K", "rb", "rd", "internal_samples"]

_AXIS_PATHS = {
    "rb": "bath.bath_radius_rb",
    "rd": "cce.dipole_radius_rd",
    "internal_samples": "cce.internal_samples",
}


class ConvergenceConfig(BaseModel):
    """
    Vary one parameter of a base run and compare the curves.
    """

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    base: RunConfig
    axis: ConvergenceAxis
    values: List[float] = Field(min_length=1)
    reference: Literal["largest", "exact"] = "largest"
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_axis(self) -> "ConvergenceConfig":
        if self.base.method_spec.kind == "exact":
            raise ValueError("convergence studies need a pcce or cce base method")
        if self.axis in ("K", "internal_samples") and any(v != int(v) or v < 1 for v in self.values):
            raise ValueError(f"{self.axis} values must be positive integers")
        if self.axis == "K" and self.base.method_spec.kind != "pcce":
            raise ValueError("the K axis needs a pcce(N,K) base method")
        if self.reference == "largest" and len(self.values) < 2:
            raise ValueError("comparison against the largest value needs at least 2 values")
        for value in self.values:
            self.config_for(value)
        return self

    def config_for(self, value: float) -> RunConfig:
        if self.axis == "K":
            order = self.base.method_spec.order_N
            return self.base.with_updates({"method": f"pcce({order},{int(value)})"})
        update: Any = int(value) if self.axis == "internal_samples" else float(value)
        updates = {_AXIS_PATHS[self.axis]: update}
        if self.axis == "rd" and self.base.bath.shell_thickness is None:
            updates["bath.shell_thickness"] = shell_thickness_for(float(value))
        return self.base.with_updates(updates)

    def exact_config(self) -> RunConfig:
        return self.base.with_updates({"method": "exact"})


AnyConfig = Union[RunConfig, SweepConfig, ConvergenceConfig]


# ------------------------------------------------------------------------------
# Loading
# ------------------------------------------------------------------------------


def _field_path(error: ValidationError) -> Tuple[str, str]:
    first = error.errors()[0]
    path = ".".join(str(part) for part in first.get("loc", ())) or "<root>"
    return path, first.get("msg", str(error))


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Raises:
        ConfigError: If the file is unreadable or not a mapping.
    """
    source = Path(path)
    try:
        with open(source, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read configuration {source}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"configuration {source} must be a mapping")
    return data


def detect_kind(data: Dict[str, Any]) -> Literal["run", "sweep", "convergence"]:
    if "axis" in data:
        return "convergence"
    if "concentrations_ppm" in data or "layer_thicknesses_L" in data:
        return "sweep"
    return "run"


def parse_config(data: Dict[str, Any], kind: Optional[str] = None) -> AnyConfig:
    """
    Validate a configuration document.

    Raises:
        ConfigError: With the dotted path of the first offending field.
    """
    model = {"run": RunConfig, "sweep": SweepConfig, "convergence": ConvergenceConfig}[
        kind or detect_kind(data)
    ]
    try:
        return model.model_validate(data)
    except ValidationError as e:
        path, message = _field_path(e)
        raise ConfigError(message, field_path=path) from e


def load_config(path: Union[str, Path], kind: Optional[str] = None) -> AnyConfig:
    return parse_config(read_document(path), kind)
