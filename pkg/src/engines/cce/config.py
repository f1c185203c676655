from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.config import settings

AveragingMode = Literal["normal", "internal", "combined"]

# (normal, internal) mean-field sample counts per partition size for order 2
_DEFAULT_SAMPLES = {
    1: ("normal", 50, 1),
    2: ("combined", 50, 50),
    3: ("combined", 50, 20),
    4: ("normal", 10, 1),
}


class CceConfig(BaseModel):
    """
    Parameters of a pCCE(N, K) or conventional CCE(N) calculation.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # --------------------------------------------------------------------------
    # Expansion
    # --------------------------------------------------------------------------
    order_N: int = Field(default=2, ge=1, description="Max partitions per cluster")
    partition_size_K: int = Field(default=1, ge=1)
    # None derives r_d from the bath concentration and layer thickness
    dipole_radius_rd: Optional[float] = Field(default=None, gt=0)
    rd_base_r_d1: float = Field(default=45.0, gt=0, description="r_d at 1 ppm in bulk (nm)")
    partition_mode: Literal["subgroup", "whole"] = "subgroup"
    kmeans_restarts: int = Field(default=10, ge=1)

    # --------------------------------------------------------------------------
    # Mean-field averaging
    # --------------------------------------------------------------------------
    averaging: AveragingMode = "normal"
    normal_samples: int = Field(default=50, ge=1)
    internal_samples: int = Field(default=20, ge=1)

    # --------------------------------------------------------------------------
    # Cluster bath state
    # --------------------------------------------------------------------------
    # auto: exact mixed-state trace up to mixed_state_max_spins bath spins, typicality above
    bath_state_mode: Literal["auto", "mixed", "typicality"] = "auto"
    typicality_samples: int = Field(default=8, ge=1)
    mixed_state_max_spins: int = Field(default=8, ge=0)

    # --------------------------------------------------------------------------
    # Numerics
    # --------------------------------------------------------------------------
    time_grid: Optional[List[float]] = None
    unphysical_tolerance: float = Field(default_factory=lambda: settings.UNPHYSICAL_TOLERANCE, ge=0)
    division_guard: float = Field(default_factory=lambda: settings.DIVISION_GUARD, gt=0)
    flipflop: bool = True
    workers: int = Field(default=1, ge=1)

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

    @property
    def sample_shape(self) -> Tuple[int, int]:
        """(repetitions, samples per repetition) implied by the averaging mode."""
        if self.averaging == "normal":
            return self.normal_samples, 1
        if self.averaging == "internal":
            return 1, self.internal_samples
        return self.normal_samples, self.internal_samples

    @classmethod
    def for_partition_size(cls, order_N: int, partition_size_K: int, **overrides: object) -> "CceConfig":
        """
        Config with the default mean-field sample counts for pCCE(N, K).

        pCCE(2,1): 50 normal; pCCE(2,2): 50 x 50; pCCE(2,3): 50 x 20; pCCE(2,4): 10 normal.
        """
        averaging, normal, internal = _DEFAULT_SAMPLES.get(partition_size_K, ("internal", 1, 20))
        values = {
            "order_N": order_N,
            "partition_size_K": partition_size_K,
            "averaging": averaging,
            "normal_samples": normal,
            "internal_samples": internal,
        }
        values.update(overrides)
        return cls(**values)
