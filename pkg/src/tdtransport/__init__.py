"""Exciton transport through a chain of two-level systems under time-dependent dephasing.

Modules
-------
chain        chain geometry, site operators, Hamiltonian
rates        dephasing-rate models gamma(t) (and the NMR energy shift)
liouvillian  master-equation right-hand side and superoperators
evolution    time integration and periodic steady states
metrics      current, occupation spread, non-Markovianity, CP checks
experiments  config-driven sweeps, CSV output, figure summaries
"""

from .chain import ChainSpec, SiteOperatorSet, build_hamiltonian, build_operators
from .evolution import (IntegratorConfig, SteadyStateResult, TrajectoryResult, evolve,
                        find_steady_state, steady_state_nullspace)
from .liouvillian import GeneratorContext, apply_rhs, build_constant_superoperator, make_context
from .metrics import (cp_check_pauli_channels, cp_check_single_channel, current,
                      nm_indicator, nm_quantifier, spread)
from .rates import (Constant, Nmr, OffsetSine, RateModel, Sine, SineSum,
                    SingularRateError, rate_at, shift_at)

__version__ = "0.1.0"

__all__ = [
    "ChainSpec", "SiteOperatorSet", "build_operators", "build_hamiltonian",
    "RateModel", "Constant", "Sine", "OffsetSine", "SineSum", "Nmr", "SingularRateError",
    "rate_at", "shift_at",
    "GeneratorContext", "make_context", "apply_rhs", "build_constant_superoperator",
    "IntegratorConfig", "TrajectoryResult", "SteadyStateResult", "evolve",
    "find_steady_state", "steady_state_nullspace",
    "current", "spread", "nm_indicator", "nm_quantifier",
    "cp_check_single_channel", "cp_check_pauli_channels",
]
