"""
Physical Constants.

CODATA values come from `scipy.constants`; everything derived is converted to
the simulator's unit system (nm, MHz, microseconds).
"""

import math
from dataclasses import dataclass, field

from scipy import constants as codata

# Hyperfine constants of the P1 nitrogen nucleus (MHz), carried as metadata only.
HYPERFINE_A_111_MHZ = 114.0
HYPERFINE_A_OTHER_MHZ = 86.0

# Smallest hyperfine splitting between Jahn-Teller orientations (114 - 86 MHz).
HYPERFINE_SPLITTING_THRESHOLD_MHZ = HYPERFINE_A_111_MHZ - HYPERFINE_A_OTHER_MHZ

# NV zero-field splitting (MHz); drops out of the Hahn echo.
NV_ZERO_FIELD_SPLITTING_MHZ = 2870.0

# Probabilities of the five P1 subgroups:
# (+1, JT||[111]), (-1, JT||[111]), (+1, JT other), (-1, JT other), (0, any JT)
SUBGROUP_PROBABILITIES = (1 / 12, 1 / 12, 3 / 12, 3 / 12, 4 / 12)

# Hz*m^3 -> MHz*nm^3
_HZ_M3_TO_MHZ_NM3 = 1e27 / 1e6


@dataclass(frozen=True)
class PhysicalConstants:
    """
    Constants entering the dipolar coupling and the lattice geometry.

    Attributes:
        gamma_e (float): Electron gyromagnetic ratio (rad s^-1 T^-1).
        mu0_over_4pi (float): Magnetic constant over 4 pi (T m A^-1).
        hbar (float): Reduced Planck constant (J s).
        lattice_constant_a (float): Diamond cubic lattice constant (nm).
        zero_field_splitting (float): NV zero-field splitting D (MHz), unused.
    """

    gamma_e: float = codata.physical_constants["electron gyromag. ratio"][0]
    mu0_over_4pi: float = codata.mu_0 / (4 * math.pi)
    hbar: float = codata.hbar
    lattice_constant_a: float = 0.3567
    zero_field_splitting: float = NV_ZERO_FIELD_SPLITTING_MHZ
    dipolar_prefactor_b: float = field(init=False)
    carbon_density: float = field(init=False)

    def __post_init__(self) -> None:
        # Frozen dataclass: derived fields are set through object.__setattr__
        object.__setattr__(self, "dipolar_prefactor_b", self.compute_dipolar_prefactor())
        object.__setattr__(self, "carbon_density", 8.0 / self.lattice_constant_a**3)

    def compute_dipolar_prefactor(self) -> float:
        """
        Recompute b = (mu0/4pi) * gamma_e^2 * hbar / (2 pi) in MHz nm^3.

        Returns:
            float: The dipolar prefactor (about 52.04 MHz nm^3).
        """
        b_si = self.mu0_over_4pi * self.gamma_e**2 * self.hbar / (2 * math.pi)
        return b_si * _HZ_M3_TO_MHZ_NM3

    def p1_density(self, concentration_ppm: float) -> float:
        """
        Number density of P1 centers (nm^-3) at a concentration relative to carbon sites.
        """
        return self.carbon_density * concentration_ppm * 1e-6


DEFAULT_CONSTANTS = PhysicalConstants()
