"""Loading truncated lattice eigenstates with LCU circuits and measuring real-time observables."""

__version__ = "0.1.0"

from .eigen import EigenPair, TruncatedState, excited_state, ground_state, systematic_bound, truncate
from .lattice import ModelParams, PauliTermSum, SectorBasis, build_current, build_thirring, to_sector_matrix
from .lcu import Circuit, Convention, Gate, PrepPlan, build_lcu, oaa_round, success_probability
from .observables import (eigenstate, fourier_spectrum, integrated_error, loschmidt_echo, min_states_for_error,
                          two_point_correlator)
from .sim import ExactPropagator, RandomStream, StateVector, apply_circuit, hadamard_test, post_select

__all__ = [
    "Circuit", "Convention", "EigenPair", "ExactPropagator", "Gate", "ModelParams", "PauliTermSum",
    "PrepPlan", "RandomStream", "SectorBasis", "StateVector", "TruncatedState", "apply_circuit",
    "build_current", "build_lcu", "build_thirring", "eigenstate", "excited_state", "fourier_spectrum",
    "ground_state", "hadamard_test", "integrated_error", "loschmidt_echo", "min_states_for_error",
    "oaa_round", "post_select", "success_probability", "systematic_bound", "to_sector_matrix", "truncate",
    "two_point_correlator",
]
