"""The three elementary quadratic gates and their closed-form solutions.

Gates are term-list builders: a circuit is assembled by concatenating the
term lists of several gates over a shared mode set.  Each gate's terms
cancel exactly in the energy audit on their own, so any superposition does
too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import InteractionTerm, Mode
from .errors import InvalidGateError

# beyond this argument sech underflows and tanh saturates to 1 ulp
_SATURATION = 40.0


@dataclass(frozen=True)
class GateParams:
    """Coupling strength of a single gate."""

    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha <= 0.0:
            raise InvalidGateError("gate coupling alpha must be finite and positive")


def _sech(u: float) -> float:
    if abs(u) >= _SATURATION:
        return 0.0
    return 1.0 / math.cosh(u)


def _tanh(u: float) -> float:
    if u >= _SATURATION:
        return 1.0
    if u <= -_SATURATION:
        return -1.0
    return math.tanh(u)


def pump_terms(x: Mode, y: Mode, p: GateParams) -> list[InteractionTerm]:
    """Energy pump from x to y:  dx/dt = -a x y,  dy/dt = a x^2."""
    if x == y:
        raise InvalidGateError("pump needs two distinct modes")
    return [
        InteractionTerm(out=x, in1=x, in2=y, coeff=-p.alpha),
        InteractionTerm(out=y, in1=x, in2=x, coeff=p.alpha),
    ]


def pump_closed_form(A: float, alpha: float, t: float) -> tuple[float, float]:
    """Pump trajectory from (A, 0):  (A sech(a A t), A tanh(a A t))."""
    u = alpha * A * t
    return A * _sech(u), A * _tanh(u)


def amplifier_terms(x: Mode, y: Mode, p: GateParams) -> list[InteractionTerm]:
    """Amplifier, the reversed pump:  dx/dt = -a y^2,  dy/dt = a x y.

    The x mode drives exponential growth of y at rate a*x until y starts to
    drain a noticeable share of x's energy.
    """
    if x == y:
        raise InvalidGateError("amplifier needs two distinct modes")
    return [
        InteractionTerm(out=x, in1=y, in2=y, coeff=-p.alpha),
        InteractionTerm(out=y, in1=x, in2=y, coeff=p.alpha),
    ]


def amplifier_closed_form(A: float, alpha: float, T: float, t: float) -> tuple[float, float]:
    """Amplifier trajectory reaching (0, A) at time T:
    (A tanh(a A (T - t)), A sech(a A (T - t)))."""
    u = alpha * A * (T - t)
    return A * _tanh(u), A * _sech(u)


def rotor_terms(x: Mode, y: Mode, z: Mode, p: GateParams) -> list[InteractionTerm]:
    """Rotor:  dx/dt = -a y z,  dy/dt = a x z,  dz/dt = 0.

    The z mode spins the (x, y) pair around the origin at angular rate a*z.
    """
    if len({x, y, z}) != 3:
        raise InvalidGateError("rotor needs three distinct modes")
    return [
        InteractionTerm(out=x, in1=y, in2=z, coeff=-p.alpha),
        InteractionTerm(out=y, in1=x, in2=z, coeff=p.alpha),
    ]


def rotor_closed_form(
    x0: float, y0: float, z0: float, alpha: float, t: float
) -> tuple[float, float, float]:
    """Rotation of (x0, y0) by angle a*z0*t; z is unchanged."""
    theta = alpha * z0 * t
    c, s = math.cos(theta), math.sin(theta)
    return x0 * c - y0 * s, y0 * c + x0 * s, z0
