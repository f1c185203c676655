from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from src.core.config import settings

# Largest bath (NV excluded) the Trotter method accepts
TROTTER_MAX_SPINS = 21


class ExactConfig(BaseModel):
    """
    Parameters of the brute-force reference propagation.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["dense", "trotter"] = "dense"

    # None: 1 / (50 max|J|) microseconds
    trotter_dt: Optional[float] = Field(default=None, gt=0)
    self_check: bool = True
    self_check_tolerance: float = Field(default=1e-3, gt=0)
    max_halvings: int = Field(default=8, ge=0)

    typicality_samples: int = Field(default=16, ge=1)
    # Baths up to this size use the exact mixed-state trace instead of typicality
    mixed_state_max_spins: int = Field(default=10, ge=0)

    # Hilbert dimension cap including the NV; None picks the method default
    dimension_cap: Optional[int] = Field(default=None, gt=1)
    flipflop: bool = True

    @property
    def max_dimension(self) -> int:
        if self.dimension_cap is not None:
            return self.dimension_cap
        if self.method == "dense":
            return 2**settings.MAX_DENSE_SPINS
        return 2 ** (TROTTER_MAX_SPINS + 1)
