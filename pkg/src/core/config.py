from typing import Literal

from pydantic import computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Application Configuration Class.

    This class loads environment variables (prefixed with PCCE_) from the .env
    file and provides typed access to runtime settings throughout the
    application. Physics parameters do NOT live here: they belong to the run
    configuration files validated by `src.cli.models`.
    """

    # --------------------------------------------------------------------------
    # Application Settings
    # --------------------------------------------------------------------------
    # Root logging level used by the entry-point scripts
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # --------------------------------------------------------------------------
    # Execution Settings
    # --------------------------------------------------------------------------
    # Default worker count for the joblib pool (overridden by --workers)
    WORKERS: int = 1

    # Default parent directory for run outputs (overridden by --out)
    OUTPUT_DIR: str = "runs"

    # --------------------------------------------------------------------------
    # Numerical Limits
    # --------------------------------------------------------------------------
    # Largest Hilbert-space dimension any Hamiltonian may be built for
    DIMENSION_CAP: int = 2**14

    # Largest dimension propagated by dense scaling-and-squaring in spin_algebra
    EXPM_DIMENSION_CAP: int = 2**10

    # |Mx| > 1 + tolerance marks an assembled curve as unphysical
    UNPHYSICAL_TOLERANCE: float = 1e-6

    # |denominator| below this saturates a genuine cluster contribution to 1
    DIVISION_GUARD: float = 1e-6

    # --------------------------------------------------------------------------
    # Pydantic Configuration
    # --------------------------------------------------------------------------
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PCCE_",
        case_sensitive=True,
        # Ignore unrelated variables in .env
        extra="ignore",
    )

    @computed_field  # type: ignore[prop-decorator]
    @property
    def MAX_DENSE_SPINS(self) -> int:
        """
        Largest number of spins (NV included) whose joint space fits DIMENSION_CAP.

        Returns:
            int: floor(log2(DIMENSION_CAP)).
        """
        return max(self.DIMENSION_CAP.bit_length() - 1, 1)


# --------------------------------------------------------------------------
# Singleton Instance
# --------------------------------------------------------------------------
# Create a single instance of Settings to be imported and used across the app.
settings = Settings()
