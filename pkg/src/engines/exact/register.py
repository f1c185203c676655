"""
Full {NV} + bath state space for brute-force propagation.

Basis index s has the NV as its most significant bit (0 -> |0>, 1 -> |-1>)
followed by one bit per bath spin (0 -> up, 1 -> down). The Hamiltonian is
the secular dipolar Hamiltonian of the participating spins without mean
fields: Ising couplings for every pair, flip-flops for same-subgroup bath pairs.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from src.physics.spin_algebra import CouplingTable

FlipFlopPair = Tuple[int, int, float]


class SpinRegister:
    """
    Bit layout, diagonal energies and flip-flop pairs of an NV + bath register.
    """

    def __init__(self, couplings: CouplingTable, bath_indices: Sequence[int], flipflop: bool = True):
        """
        Args:
            couplings (CouplingTable): Couplings of the whole system.
            bath_indices (Sequence[int]): Coupling-table indices (1-based) of the bath spins.
            flipflop (bool): Include flip-flop terms.
        """
        self.indices = [0] + [int(i) for i in bath_indices]
        self.n_bath = len(self.indices) - 1
        self.dimension = 2 ** (self.n_bath + 1)
        self.bath_dimension = 2**self.n_bath
        self.j = couplings.j[np.ix_(self.indices, self.indices)]
        self.subgroups = couplings.subgroups[self.indices]
        allowed = couplings.flipflop_allowed[np.ix_(self.indices, self.indices)]

        self.pairs: List[FlipFlopPair] = []
        if flipflop:
            for a in range(1, self.n_bath + 1):
                for b in range(a + 1, self.n_bath + 1):
                    if allowed[a, b]:
                        self.pairs.append((self.mask(a), self.mask(b), -self.j[a, b] / 4.0))

    def mask(self, position: int) -> int:
        """Bit mask of register position (0 = NV)."""
        return 1 << (self.n_bath - position)

    @property
    def max_coupling(self) -> float:
        return float(np.max(np.abs(self.j))) if self.j.size else 0.0

    def bits(self) -> np.ndarray:
        """Basis-state bits per register position, int8 array (n + 1, dimension)."""
        states = np.arange(self.dimension)
        return np.vstack(
            [((states >> (self.n_bath - p)) & 1).astype(np.int8) for p in range(self.n_bath + 1)]
        )

    def diagonal(self) -> np.ndarray:
        """Ising energies sum_{i<k} J_ik z_i z_k (MHz)."""
        bits = self.bits()

        def z(position: int) -> np.ndarray:
            if position == 0:
                return -bits[0].astype(float)
            return 0.5 - bits[position]

        energy = np.zeros(self.dimension)
        for a in range(self.n_bath + 1):
            z_a = z(a)
            for b in range(a + 1, self.n_bath + 1):
                if self.j[a, b] != 0.0:
                    energy += self.j[a, b] * z_a * z(b)
        return energy

    def sector_keys(self) -> np.ndarray:
        """Conserved label per basis state: NV level and downs per subgroup."""
        bits = self.bits()
        base = self.n_bath + 2
        key = bits[0].astype(np.int64)
        labels = self.subgroups[1:]
        for g_pos, group in enumerate(np.unique(labels)):
            downs = bits[1:][labels == group].sum(axis=0, dtype=np.int64)
            key = key + downs * base ** (g_pos + 1)
        return key

    def sectors(self) -> List[np.ndarray]:
        keys = self.sector_keys()
        order = np.argsort(keys, kind="stable")
        _, starts = np.unique(keys[order], return_index=True)
        return [np.sort(chunk) for chunk in np.split(order, starts[1:])]

    # --------------------------------------------------------------------------
    # States and observables
    # --------------------------------------------------------------------------
    def prepare(self, bath_states: np.ndarray) -> np.ndarray:
        """(|0> + |-1>)/sqrt(2) tensor each bath column, shape (dimension, S)."""
        bath = np.asarray(bath_states, dtype=complex).reshape(self.bath_dimension, -1)
        return np.vstack([bath, bath]) / math.sqrt(2.0)

    def pi_pulse(self, states: np.ndarray) -> np.ndarray:
        """Ideal pi rotation about x on the NV: swap the |0> and |-1> halves."""
        half = self.bath_dimension
        return np.vstack([states[half:], states[:half]])

    def coherence(self, states: np.ndarray) -> np.ndarray:
        """Mx = <I0x> / <I0x(0)> = 2 Re <psi_0|psi_-1> per column."""
        half = self.bath_dimension
        return 2.0 * np.real(np.sum(states[:half].conj() * states[half:], axis=0))
