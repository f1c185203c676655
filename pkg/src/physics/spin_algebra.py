"""
Spin Algebra Module.

Builds secular dipolar Hamiltonians for a subset of {NV} + bath spins and
evaluates the Hahn-echo coherence of the NV spin on that subset.

Conventions:
    - Couplings and fields in MHz, times in microseconds; propagators are
      exp(-2 pi i H t).
    - Basis states are bit strings, first listed spin most significant. Bit 0
      means |up> (Iz = +1/2) for a bath spin and |0> (Iz = 0) for the NV; bit 1
      means |down> (Iz = -1/2) and |-1> (Iz = -1).
    - The NV z-operator is diag(0, -1). No flip-flop term ever touches the NV,
      so every Hamiltonian is block diagonal in the NV level. The two blocks
      are called branch 0 (NV in |0>) and branch 1 (NV in |-1>).

With U_a = exp(-2 pi i H_a tau) for the two branches, the Hahn echo
(evolve, pi_x on the NV, evolve) gives

    Mx(2 tau) = Re Tr[rho_B (U0 U1)^dagger (U1 U0)].

Both branches conserve the bath magnetization of every subgroup, so the
propagators are computed per conserved sector.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from src.core.config import settings
from src.core.constants import DEFAULT_CONSTANTS, PhysicalConstants
from src.core.exceptions import CapacityError, CoincidentSpinsError, InvariantError

logger = logging.getLogger(__name__)

NV_INDEX = 0
HERMITICITY_TOLERANCE = 1e-12

BathState = Literal["mixed", "typicality"]


# ------------------------------------------------------------------------------
# Couplings
# ------------------------------------------------------------------------------
def dipolar_coupling(
    r_vec: Sequence[float], constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """
    Secular dipolar coupling constant J = b (1 - 3 cos^2 theta) / r^3.

    Args:
        r_vec (Sequence[float]): Displacement between the two spins (nm).
        constants (PhysicalConstants): Source of the prefactor b (MHz nm^3).

    Returns:
        float: J in MHz; theta is measured from the z ([111]) axis.

    Raises:
        CoincidentSpinsError: If the displacement has zero length.
    """
    r = np.asarray(r_vec, dtype=float)
    r2 = float(r @ r)
    if r2 == 0.0:
        raise CoincidentSpinsError("Dipolar coupling requested for two spins at the same position.")
    cos2 = r[2] ** 2 / r2
    return constants.dipolar_prefactor_b * (1.0 - 3.0 * cos2) / r2**1.5


def coupling_matrix(
    positions: np.ndarray, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> np.ndarray:
    """
    Vectorized J_ij for all pairs of the given positions (diagonal set to zero).
    """
    pos = np.asarray(positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, np.inf)
    if np.any(r2 == 0.0):
        i, k = np.argwhere(r2 == 0.0)[0]
        raise CoincidentSpinsError(f"Spins {i} and {k} share a position.")
    cos2 = diff[:, :, 2] ** 2 / r2
    j = constants.dipolar_prefactor_b * (1.0 - 3.0 * cos2) / r2**1.5
    np.fill_diagonal(j, 0.0)
    return j


@dataclass(frozen=True, eq=False)
class CouplingTable:
    """
    Pairwise couplings for the NV (index 0) and the bath spins (indices 1..n).

    Attributes:
        j (np.ndarray): Symmetric (n+1, n+1) matrix of J_ij in MHz.
        flipflop_allowed (np.ndarray): Symmetric boolean matrix; never true on the NV row.
        subgroups (np.ndarray): Subgroup label per index (NV carries -1).
    """

    j: np.ndarray
    flipflop_allowed: np.ndarray
    subgroups: np.ndarray

    @classmethod
    def from_geometry(
        cls,
        bath_positions: np.ndarray,
        subgroups: Sequence[int],
        constants: PhysicalConstants = DEFAULT_CONSTANTS,
    ) -> "CouplingTable":
        """
        Build the table for an NV at the origin and bath spins at `bath_positions`.
        """
        bath = np.asarray(bath_positions, dtype=float).reshape(-1, 3)
        positions = np.vstack([np.zeros((1, 3)), bath])
        j = coupling_matrix(positions, constants)

        labels = np.concatenate([[-1], np.asarray(subgroups, dtype=int)])
        allowed = labels[:, None] == labels[None, :]
        allowed[NV_INDEX, :] = False
        allowed[:, NV_INDEX] = False
        np.fill_diagonal(allowed, False)

        for arr in (j, allowed, labels):
            arr.setflags(write=False)
        return cls(j=j, flipflop_allowed=allowed, subgroups=labels)

    @property
    def n_bath(self) -> int:
        return self.j.shape[0] - 1


@dataclass(frozen=True, eq=False)
class NVConvention:
    """
    The NV two-level reduction: adapted z operator, initial state and pi pulse.
    """

    iz0: np.ndarray
    ix0: np.ndarray
    initial_state: np.ndarray
    pulse: np.ndarray


NV_CONVENTION = NVConvention(
    iz0=np.diag([0.0, -1.0]),
    ix0=0.5 * np.array([[0.0, 1.0], [1.0, 0.0]]),
    initial_state=np.array([1.0, 1.0]) / math.sqrt(2.0),
    # Ideal pi rotation about x, up to a global phase
    pulse=np.array([[0.0, 1.0], [1.0, 0.0]]),
)


# ------------------------------------------------------------------------------
# Effective Hamiltonian
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class EffectiveHamiltonian:
    """
    Secular Hamiltonian of a spin subset with the rest of the bath frozen.

    Attributes:
        subset (Tuple[int, ...]): Participating indices; the NV (0) first if present.
        ising_terms (Tuple): (i, k, J_ik) for every in-subset pair.
        flipflop_terms (Tuple): (i, k, -J_ik/4) for every allowed in-subset bath pair.
        static_fields (Tuple[float, ...]): Mean-field h_i (MHz) aligned with `subset`.
        subgroups (Tuple[int, ...]): Subgroup label aligned with `subset` (NV: -1).
    """

    subset: Tuple[int, ...]
    ising_terms: Tuple[Tuple[int, int, float], ...]
    flipflop_terms: Tuple[Tuple[int, int, float], ...]
    static_fields: Tuple[float, ...]
    subgroups: Tuple[int, ...]

    @property
    def nv_included(self) -> bool:
        return len(self.subset) > 0 and self.subset[0] == NV_INDEX

    @property
    def bath_subset(self) -> Tuple[int, ...]:
        return self.subset[1:] if self.nv_included else self.subset

    @property
    def bath_dimension(self) -> int:
        return 2 ** len(self.bath_subset)

    @property
    def dimension(self) -> int:
        return 2 ** len(self.subset)

    def field_of(self, index: int) -> float:
        return self.static_fields[self.subset.index(index)]

    # --------------------------------------------------------------------------
    # Matrix construction
    # --------------------------------------------------------------------------
    def bath_z_values(self) -> np.ndarray:
        """Iz eigenvalues, shape (bath_dimension, n_bath_in_subset)."""
        m = len(self.bath_subset)
        states = np.arange(2**m)[:, None]
        bits = (states >> (m - 1 - np.arange(m))[None, :]) & 1
        return 0.5 - bits

    def branch_diagonals(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Diagonal energies of the two NV branches (NV Iz = 0 and NV Iz = -1).

        Without the NV in the subset both entries equal the bath-only diagonal.
        """
        z = self.bath_z_values()
        pos = {idx: p for p, idx in enumerate(self.bath_subset)}
        bath_energy = np.zeros(z.shape[0])
        nv_field = np.zeros(z.shape[0])

        for i, k, coupling in self.ising_terms:
            if i == NV_INDEX or k == NV_INDEX:
                other = k if i == NV_INDEX else i
                nv_field += coupling * z[:, pos[other]]
            else:
                bath_energy += coupling * z[:, pos[i]] * z[:, pos[k]]

        for idx, h in zip(self.subset, self.static_fields):
            if idx == NV_INDEX:
                nv_field += h
            else:
                bath_energy += h * z[:, pos[idx]]

        if not self.nv_included:
            return bath_energy, bath_energy
        return bath_energy, bath_energy - nv_field

    def flipflop_matrix(self) -> np.ndarray:
        """Dense flip-flop part over the bath subspace (real symmetric)."""
        m = len(self.bath_subset)
        dim = 2**m
        pos = {idx: p for p, idx in enumerate(self.bath_subset)}
        f = np.zeros((dim, dim))
        states = np.arange(dim)
        for i, k, coeff in self.flipflop_terms:
            mask_i = 1 << (m - 1 - pos[i])
            mask_k = 1 << (m - 1 - pos[k])
            differ = ((states & mask_i) > 0) != ((states & mask_k) > 0)
            src = states[differ]
            f[src ^ (mask_i | mask_k), src] += coeff
        return f

    def branch_matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bath-space Hamiltonians of branch 0 and branch 1."""
        d0, d1 = self.branch_diagonals()
        f = self.flipflop_matrix()
        return f + np.diag(d0), f + np.diag(d1)

    def matrix(self) -> np.ndarray:
        """
        Full Hamiltonian on the subset's Hilbert space (NV most significant).
        """
        h0, h1 = self.branch_matrices()
        if not self.nv_included:
            return h0
        dim = h0.shape[0]
        full = np.zeros((2 * dim, 2 * dim))
        full[:dim, :dim] = h0
        full[dim:, dim:] = h1
        return full

    def bath_sectors(self) -> List[np.ndarray]:
        """
        Index sets of the bath basis states sharing every subgroup's magnetization.

        Both branch Hamiltonians are block diagonal over these sets.
        """
        z = self.bath_z_values()
        labels = np.asarray(self.subgroups[1:] if self.nv_included else self.subgroups)
        if labels.size == 0:
            return [np.arange(1)]
        base = len(labels) + 1
        key = np.zeros(z.shape[0], dtype=np.int64)
        for g_pos, group in enumerate(np.unique(labels)):
            downs = np.sum(z[:, labels == group] < 0, axis=1)
            key += downs * base**g_pos
        order = np.argsort(key, kind="stable")
        _, starts = np.unique(key[order], return_index=True)
        return [np.sort(chunk) for chunk in np.split(order, starts[1:])]


def assert_hermitian(matrix: np.ndarray, tolerance: float = HERMITICITY_TOLERANCE) -> None:
    """
    Raises:
        InvariantError: If max|H - H^dagger| exceeds the tolerance (MHz).
    """
    deviation = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
    if deviation >= tolerance:
        raise InvariantError(f"Hamiltonian is not Hermitian (max deviation {deviation:.3e} MHz).")


def build_hamiltonian(
    subset: Sequence[int],
    table: CouplingTable,
    meanfield: np.ndarray,
    dimension_cap: Optional[int] = None,
    flipflop: bool = True,
) -> EffectiveHamiltonian:
    """
    Assemble the effective Hamiltonian of `subset` with frozen outside spins.

    Args:
        subset (Sequence[int]): Distinct indices; 0 denotes the NV.
        table (CouplingTable): Couplings of the whole system.
        meanfield (np.ndarray): Iz value (+-1/2) per bath spin, indexed by bath index - 1.
            Entries for spins inside the subset are ignored.
        dimension_cap (Optional[int]): Maximum Hilbert dimension (default settings.DIMENSION_CAP).
        flipflop (bool): Disable to obtain the pure Ising limit.

    Returns:
        EffectiveHamiltonian: Terms and static fields for the subset.

    Raises:
        ValueError: On invalid or repeated indices, or a mean-field vector of the wrong size.
        CapacityError: If 2^len(subset) exceeds the cap.
    """
    cap = dimension_cap or settings.DIMENSION_CAP
    ordered = sorted(int(i) for i in subset)
    if len(set(ordered)) != len(ordered):
        raise ValueError(f"Subset contains repeated indices: {list(subset)}")
    if ordered and (ordered[0] < 0 or ordered[-1] > table.n_bath):
        raise ValueError(f"Subset indices out of range 0..{table.n_bath}.")
    if 2 ** len(ordered) > cap:
        raise CapacityError(
            f"Subset of {len(ordered)} spins needs dimension 2^{len(ordered)} > cap {cap}."
        )

    values = np.asarray(meanfield, dtype=float)
    if values.shape != (table.n_bath,):
        raise ValueError(f"Mean-field vector must have {table.n_bath} entries, got {values.shape}.")

    idx = np.asarray(ordered, dtype=int)
    frozen = np.concatenate([[0.0], values])
    frozen[idx] = 0.0
    fields = table.j[idx] @ frozen if idx.size else np.zeros(0)

    ising: List[Tuple[int, int, float]] = []
    flips: List[Tuple[int, int, float]] = []
    for a in range(len(ordered)):
        for b in range(a + 1, len(ordered)):
            i, k = ordered[a], ordered[b]
            coupling = float(table.j[i, k])
            ising.append((i, k, coupling))
            if flipflop and table.flipflop_allowed[i, k]:
                flips.append((i, k, -coupling / 4.0))

    return EffectiveHamiltonian(
        subset=tuple(ordered),
        ising_terms=tuple(ising),
        flipflop_terms=tuple(flips),
        static_fields=tuple(float(h) for h in fields),
        subgroups=tuple(int(table.subgroups[i]) for i in ordered),
    )


# ------------------------------------------------------------------------------
# Hahn echo
# ------------------------------------------------------------------------------
def random_pure_states(dimension: int, n_states: int, rng: np.random.Generator) -> np.ndarray:
    """
    Haar-random pure states as the columns of a (dimension, n_states) matrix.

    Amplitudes are i.i.d. complex Gaussians, normalized column by column.
    """
    amplitudes = rng.standard_normal((dimension, n_states)) + 1j * rng.standard_normal(
        (dimension, n_states)
    )
    return amplitudes / np.linalg.norm(amplitudes, axis=0, keepdims=True)


def _sector_propagators(
    block: np.ndarray, tau: float, diagonal: bool
) -> np.ndarray:
    if diagonal or block.shape[0] == 1:
        return np.diag(np.exp(-2j * math.pi * tau * np.diag(block)))
    return expm(-2j * math.pi * tau * block)


def hahn_echo_curve(
    h: EffectiveHamiltonian,
    taus: Sequence[float],
    bath_state: BathState = "mixed",
    typicality_samples: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate Mx(2 tau) for every tau with one propagator pair per tau.

    Args:
        h (EffectiveHamiltonian): Must include the NV.
        taus (Sequence[float]): Free-evolution times tau >= 0 (microseconds).
        bath_state (str): "mixed" for the exact infinite-temperature trace,
            "typicality" for an average over random pure bath states.
        typicality_samples (int): Number of random states in typicality mode.
        rng (Optional[np.random.Generator]): Source of the random states.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Mx per tau and its standard error
        (zero for the mixed state).
    """
    if not h.nv_included:
        raise ValueError("The Hahn echo needs the NV in the subset.")
    tau_arr = np.asarray(taus, dtype=float)
    if np.any(tau_arr < 0):
        raise ValueError("Free-evolution times must be non-negative.")
    if h.dimension > settings.EXPM_DIMENSION_CAP:
        raise CapacityError(
            f"Dimension {h.dimension} exceeds the dense propagation cap "
            f"{settings.EXPM_DIMENSION_CAP}; use the exact engine."
        )

    h0, h1 = h.branch_matrices()
    assert_hermitian(h0)
    assert_hermitian(h1)
    diagonal = len(h.flipflop_terms) == 0
    sectors = h.bath_sectors()
    blocks = [(idx, h0[np.ix_(idx, idx)], h1[np.ix_(idx, idx)]) for idx in sectors]
    dim = h0.shape[0]

    states: Optional[np.ndarray] = None
    if bath_state == "typicality":
        states = random_pure_states(dim, typicality_samples, rng or np.random.default_rng())

    mx = np.empty(tau_arr.size)
    stderr = np.zeros(tau_arr.size)
    for t_pos, tau in enumerate(tau_arr):
        if tau == 0.0:
            mx[t_pos] = 1.0
            continue
        if states is None:
            overlap = 0.0 + 0.0j
            for idx, b0, b1 in blocks:
                u0 = _sector_propagators(b0, tau, diagonal)
                u1 = _sector_propagators(b1, tau, diagonal)
                overlap += np.vdot(u0 @ u1, u1 @ u0)
            mx[t_pos] = overlap.real / dim
            continue

        per_state = np.zeros(states.shape[1], dtype=complex)
        for idx, b0, b1 in blocks:
            u0 = _sector_propagators(b0, tau, diagonal)
            u1 = _sector_propagators(b1, tau, diagonal)
            part = states[idx]
            forward = u1 @ (u0 @ part)
            backward = u0 @ (u1 @ part)
            per_state += np.sum(backward.conj() * forward, axis=0)
        values = per_state.real
        mx[t_pos] = values.mean()
        if values.size > 1:
            stderr[t_pos] = values.std(ddof=1) / math.sqrt(values.size)

    return mx, stderr


def hahn_echo_mx(
    h: EffectiveHamiltonian,
    tau: float,
    bath_state: BathState = "mixed",
    typicality_samples: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Mx(2 tau) = 2 Tr[rho(2 tau) I0x] after evolve-pi_x-evolve with one fixed U(tau).
    """
    mx, _ = hahn_echo_curve(h, [tau], bath_state, typicality_samples, rng)
    return float(mx[0])


def subgroup_magnetization_operators(h: EffectiveHamiltonian) -> Dict[int, np.ndarray]:
    """
    Total Iz per subgroup on the full subset space (for conservation checks).
    """
    z = h.bath_z_values()
    labels = np.asarray(h.subgroups[1:] if h.nv_included else h.subgroups)
    operators: Dict[int, np.ndarray] = {}
    for group in np.unique(labels):
        diag = np.sum(z[:, labels == group], axis=1)
        if h.nv_included:
            diag = np.concatenate([diag, diag])
        operators[int(group)] = np.diag(diag)
    return operators
