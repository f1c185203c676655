"""
Second-order Suzuki-Trotter propagation.

One step of length h applies

    exp(-i D h/2) [G_1 ... G_P](h/2) [G_P ... G_1](h/2) exp(-i D h/2)

where D is the diagonal Ising part and G_p are the two-level flip-flop
rotations of the individual same-subgroup pairs. The composition is
symmetric, so the local error is third order in h.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from src.engines.exact.register import SpinRegister

logger = logging.getLogger(__name__)

# Precompute pair index arrays while they stay below this many entries
_INDEX_CACHE_LIMIT = 50_000_000


class TrotterEchoPropagator:
    """
    Hahn-echo propagation with a fixed maximal Trotter step.
    """

    def __init__(self, register: SpinRegister, dt: float):
        if dt <= 0:
            raise ValueError("Trotter step must be positive.")
        self.register = register
        self.dt = float(dt)
        self.energies = register.diagonal()
        self._pair_indices: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None
        if register.dimension * max(len(register.pairs), 1) <= _INDEX_CACHE_LIMIT:
            self._pair_indices = [self._indices(a, b) for a, b, _ in register.pairs]

    def _indices(self, mask_a: int, mask_b: int) -> Tuple[np.ndarray, np.ndarray]:
        states = np.arange(self.register.dimension)
        src = states[((states & mask_a) == 0) & ((states & mask_b) != 0)]
        return src, src ^ (mask_a | mask_b)

    def steps_for(self, tau: float) -> int:
        return max(1, math.ceil(tau / self.dt - 1e-12))

    def _flipflop_sweep(self, states: np.ndarray, h: float, reverse: bool) -> None:
        pairs = list(enumerate(self.register.pairs))
        if reverse:
            pairs.reverse()
        for p, (mask_a, mask_b, coeff) in pairs:
            if self._pair_indices is not None:
                src, dst = self._pair_indices[p]
            else:
                src, dst = self._indices(mask_a, mask_b)
            angle = 2.0 * math.pi * coeff * h
            c, s = math.cos(angle), math.sin(angle)
            a = states[src]
            b = states[dst]
            states[src] = c * a - 1j * s * b
            states[dst] = c * b - 1j * s * a

    def evolve(self, states: np.ndarray, tau: float) -> np.ndarray:
        """Approximate exp(-2 pi i H tau) applied to the columns of `states`."""
        out = np.array(states, dtype=complex, copy=True)
        if tau == 0.0:
            return out
        n = self.steps_for(tau)
        h = tau / n
        half_phase = np.exp(-1j * math.pi * self.energies * h)[:, None]
        for _ in range(n):
            out *= half_phase
            self._flipflop_sweep(out, h / 2.0, reverse=False)
            self._flipflop_sweep(out, h / 2.0, reverse=True)
            out *= half_phase
        return out

    def echo(self, states: np.ndarray, tau: float) -> np.ndarray:
        return self.evolve(self.register.pi_pulse(self.evolve(states, tau)), tau)
