"""Numerical laboratory for energy-conserving quadratic ODE cascades.

Builds finite quadratic circuits out of pump/amplifier/rotor gates,
integrates them with a deterministic adaptive embedded pair, audits the
energy-cancellation structure, chases cascade checkpoints through a sliding
window of geometric scales, extrapolates finite-time blowup, and certifies
the trilinear-form non-degeneracy underpinning the construction.
"""

__version__ = "0.1.0"

from .circuit import (
    CancellationReport,
    CircuitSpec,
    InteractionTerm,
    Mode,
    StateVector,
    assemble_rhs,
    check_cancellation_numeric,
    check_cancellation_structural,
    total_energy,
)
from .integrator import (
    EventResult,
    IntegratorConfig,
    Trajectory,
    WindowPolicy,
    extend_window,
    integrate,
    integrate_until,
)

__all__ = [
    "CancellationReport",
    "CircuitSpec",
    "EventResult",
    "InteractionTerm",
    "IntegratorConfig",
    "Mode",
    "StateVector",
    "Trajectory",
    "WindowPolicy",
    "assemble_rhs",
    "check_cancellation_numeric",
    "check_cancellation_structural",
    "extend_window",
    "integrate",
    "integrate_until",
    "total_energy",
    "__version__",
]
