"""
Exact Engine Module.

Brute-force reference solution of the Hahn echo for small baths: the full
NV + bath state is propagated either by dense per-sector matrix exponentials
or by second-order Suzuki-Trotter steps. The bath starts in the maximally
mixed state (exact trace over basis states) for small baths and in random
pure states (canonical typicality) for larger ones.

Shell spins play no role here: only dynamic spins are propagated.
"""

import logging
from typing import TYPE_CHECKING, Any, Callable, Dict, Sequence, Tuple

import numpy as np

from src.core.exceptions import CapacityError, TrotterStepError
from src.core.parallel import STREAM_TYPICALITY, stream_rng
from src.engines.base import BaseEchoEngine, DecayCurve, validate_time_grid
from src.engines.exact.config import ExactConfig
from src.engines.exact.dense import DenseEchoPropagator
from src.engines.exact.register import SpinRegister
from src.engines.exact.trotter import TrotterEchoPropagator
from src.engines.exact.typicality import TypicalityResult, mixed_state_average, typicality_average

if TYPE_CHECKING:
    from src.bath.generator import BathSystem

logger = logging.getLogger(__name__)

Propagator = Any


def default_trotter_step(register: SpinRegister) -> float:
    """1 / (50 max|J|) microseconds (1 us without couplings)."""
    j_max = register.max_coupling
    return 1.0 / (50.0 * j_max) if j_max > 0 else 1.0


def echo_observable(register: SpinRegister, propagator: Propagator, taus: np.ndarray) -> Callable:
    """
    Batch evolution returning Mx for every (state, tau), shape (n_states, T).
    """

    def evolve(bath_states: np.ndarray) -> np.ndarray:
        initial = register.prepare(bath_states)
        values = np.empty((initial.shape[1], taus.size))
        for t_pos, tau in enumerate(taus):
            values[:, t_pos] = register.coherence(propagator.echo(initial, float(tau)))
        return values

    return evolve


class ExactEngine(BaseEchoEngine):
    """
    Dense or Trotter reference engine.
    """

    def __init__(self, config: ExactConfig):
        super().__init__(f"exact({config.method})")
        self.config = config

    def register_for(self, system: "BathSystem") -> SpinRegister:
        """
        Raises:
            CapacityError: If NV + dynamic spins exceed the dimension cap.
        """
        shell = system.n_spins - system.n_dynamic
        if shell:
            logger.warning(f"Exact engine ignores {shell} static shell spins.")
        bath = [int(i) + 1 for i in system.dynamic_indices]
        dimension = 2 ** (len(bath) + 1)
        if dimension > self.config.max_dimension:
            raise CapacityError(
                f"{len(bath)} bath spins need dimension {dimension} > cap "
                f"{self.config.max_dimension} for the {self.config.method} method."
            )
        return SpinRegister(system.couplings, bath, flipflop=self.config.flipflop)

    def _average(
        self, register: SpinRegister, propagator: Propagator, taus: np.ndarray, seed: int, realization: int
    ) -> TypicalityResult:
        evolve = echo_observable(register, propagator, taus)
        if register.n_bath <= self.config.mixed_state_max_spins:
            return mixed_state_average(evolve, register.bath_dimension)
        rng = stream_rng(seed, realization, STREAM_TYPICALITY)
        return typicality_average(evolve, self.config.typicality_samples, rng, register.bath_dimension)

    def _trotter(
        self, register: SpinRegister, taus: np.ndarray, seed: int, realization: int
    ) -> Tuple[TypicalityResult, float]:
        dt = self.config.trotter_dt or default_trotter_step(register)
        coarse = self._average(register, TrotterEchoPropagator(register, dt), taus, seed, realization)
        if not self.config.self_check:
            return coarse, dt

        for _ in range(self.config.max_halvings + 1):
            fine = self._average(
                register, TrotterEchoPropagator(register, dt / 2.0), taus, seed, realization
            )
            change = float(np.max(np.abs(fine.mean - coarse.mean)))
            logger.debug(f"Trotter self-check dt = {dt:.3e} us: max |dMx| = {change:.2e}.")
            if change <= self.config.self_check_tolerance:
                return fine, dt / 2.0
            dt /= 2.0
            coarse = fine

        raise TrotterStepError(
            f"Halving the Trotter step {self.config.max_halvings} times still changes Mx by "
            f"{change:.2e} > {self.config.self_check_tolerance}."
        )

    def simulate(
        self,
        system: "BathSystem",
        times: Sequence[float],
        seed: int = 0,
        realization: int = 0,
    ) -> DecayCurve:
        grid = validate_time_grid(times)
        taus = grid / 2.0
        register = self.register_for(system)
        metadata: Dict[str, Any] = {"n_bath_spins": register.n_bath}

        if self.config.method == "dense":
            result = self._average(register, DenseEchoPropagator(register), taus, seed, realization)
        else:
            result, dt = self._trotter(register, taus, seed, realization)
            metadata["trotter_dt_us"] = dt

        metadata["bath_states"] = result.n_samples
        metadata["typicality_converged"] = result.converged
        stderr = np.nan_to_num(result.stderr, nan=0.0)
        logger.info(
            f"{self.name}: {register.n_bath} bath spins, Mx(t_max) = {result.mean[-1]:.4f}."
        )
        return DecayCurve(
            times=grid,
            mx=result.mean,
            stderr=stderr,
            method=self.name,
            metadata=metadata,
        )


def exact_hahn_echo(system: "BathSystem", config: ExactConfig, times: Sequence[float], seed: int = 0) -> DecayCurve:
    """
    Reference echo curve of a small bath on the 2 tau grid `times` (microseconds).
    """
    return ExactEngine(config).simulate(system, times, seed)
