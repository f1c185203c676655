"""
Dense propagation: one matrix exponential per conserved sector and per tau.
"""

import logging
import math
from typing import Dict, List, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import expm

from src.engines.exact.register import SpinRegister

logger = logging.getLogger(__name__)


class DenseEchoPropagator:
    """
    Exact Hahn-echo propagation on the full register, block by block.
    """

    def __init__(self, register: SpinRegister):
        self.register = register
        self.sectors = register.sectors()
        hamiltonian = self._sparse_hamiltonian()
        self.blocks: List[np.ndarray] = [
            hamiltonian[idx][:, idx].toarray() for idx in self.sectors
        ]
        self._cached_tau: Optional[float] = None
        self._cached: List[np.ndarray] = []
        logger.debug(
            f"Dense propagator: dimension {register.dimension}, {len(self.sectors)} sectors, "
            f"largest {max(len(s) for s in self.sectors)}."
        )

    def _sparse_hamiltonian(self) -> sparse.csr_matrix:
        reg = self.register
        rows = [np.arange(reg.dimension)]
        cols = [np.arange(reg.dimension)]
        vals = [reg.diagonal()]
        states = np.arange(reg.dimension)
        for mask_a, mask_b, coeff in reg.pairs:
            differ = ((states & mask_a) > 0) != ((states & mask_b) > 0)
            src = states[differ]
            rows.append(src ^ (mask_a | mask_b))
            cols.append(src)
            vals.append(np.full(src.size, coeff))
        return sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(reg.dimension, reg.dimension),
        ).tocsr()

    def propagators(self, tau: float) -> List[np.ndarray]:
        """exp(-2 pi i H_block tau) for every sector (cached for the last tau)."""
        if self._cached_tau != tau:
            self._cached = [expm(-2j * math.pi * tau * block) for block in self.blocks]
            self._cached_tau = tau
        return self._cached

    def evolve(self, states: np.ndarray, tau: float) -> np.ndarray:
        out = np.empty_like(states, dtype=complex)
        for idx, u in zip(self.sectors, self.propagators(tau)):
            out[idx] = u @ states[idx]
        return out

    def echo(self, states: np.ndarray, tau: float) -> np.ndarray:
        """U(tau) pi_x U(tau) applied to the columns of `states`."""
        return self.evolve(self.register.pi_pulse(self.evolve(states, tau)), tau)

    def energy(self, states: np.ndarray) -> np.ndarray:
        """<psi|H|psi> per column (MHz)."""
        total = np.zeros(states.shape[1])
        for idx, block in zip(self.sectors, self.blocks):
            part = states[idx]
            total += np.real(np.sum(part.conj() * (block @ part), axis=0))
        return total

    def describe(self) -> Dict[str, int]:
        return {"dimension": self.register.dimension, "sectors": len(self.sectors)}
