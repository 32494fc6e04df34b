"""Finite quadratic ODE systems dX/dt = -D X + G(X, X) and their energy audit.

A circuit is a finite list of modes, a list of quadratic interaction terms
(each feeding ``coeff * X_in1 * X_in2`` into one output mode), and a
non-negative dissipation rate per mode.  The quadratic part conserves the
energy ``sum(X_j^2)/2`` exactly whenever, for every unordered multiset of
three modes, the coefficients of all stored terms over that multiset sum to
zero.  Both a structural audit of that condition and a randomized numeric
cross-check are provided.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .errors import NonFiniteStateError, SpecError

STRUCTURAL_TOL = 1e-12


@dataclass(frozen=True, order=True)
class Mode:
    """One scalar unknown, addressed by an opaque label, component and scale.

    ``component`` distinguishes the roles living at one dyadic scale (a
    four-component cascade uses 1..4); scale-free circuits use scale 0.
    """

    label: str
    component: int = 1
    scale: int = 0

    def __post_init__(self):
        if self.component < 1:
            raise SpecError(f"mode {self.label!r}: component must be >= 1")


@dataclass(frozen=True)
class InteractionTerm:
    """Contribution ``coeff * X[in1] * X[in2]`` to the derivative of ``out``."""

    out: Mode
    in1: Mode
    in2: Mode
    coeff: float

    def __post_init__(self):
        if not np.isfinite(self.coeff) or self.coeff == 0.0:
            raise SpecError(
                f"term into {self.out.label!r}: coefficient must be finite and nonzero"
            )

    def mode_multiset(self) -> tuple[Mode, Mode, Mode]:
        """The unordered multiset {out, in1, in2}, as a sorted tuple."""
        return tuple(sorted((self.out, self.in1, self.in2)))


@dataclass(frozen=True)
class CircuitSpec:
    """Immutable description of a quadratic circuit.

    Modes are ordered; state vectors align with that order.  Dissipation maps
    a mode to its decay rate (modes not listed decay at rate 0).
    """

    modes: tuple[Mode, ...]
    interactions: tuple[InteractionTerm, ...] = ()
    dissipation: Mapping[Mode, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        object.__setattr__(self, "dissipation", dict(self.dissipation))
        if len(self.modes) == 0:
            raise SpecError("a circuit needs at least one mode")
        keys = {(m.component, m.scale) for m in self.modes}
        if len(keys) != len(self.modes):
            raise SpecError("(component, scale) pairs must be unique")
        if len({m.label for m in self.modes}) != len(self.modes):
            raise SpecError("mode labels must be unique")
        declared = set(self.modes)
        for term in self.interactions:
            for m in (term.out, term.in1, term.in2):
                if m not in declared:
                    raise SpecError(f"interaction references undeclared mode {m.label!r}")
        for m, nu in self.dissipation.items():
            if m not in declared:
                raise SpecError(f"dissipation references undeclared mode {m.label!r}")
            if not np.isfinite(nu) or nu < 0.0:
                raise SpecError(f"dissipation rate for {m.label!r} must be finite and >= 0")

    @cached_property
    def index(self) -> dict[Mode, int]:
        return {m: j for j, m in enumerate(self.modes)}

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    @cached_property
    def rates(self) -> np.ndarray:
        """Dissipation rates aligned with the mode order."""
        nu = np.zeros(len(self.modes))
        for m, v in self.dissipation.items():
            nu[self.index[m]] = v
        return nu

    @cached_property
    def _compiled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        out = np.array([self.index[t.out] for t in self.interactions], dtype=np.intp)
        in1 = np.array([self.index[t.in1] for t in self.interactions], dtype=np.intp)
        in2 = np.array([self.index[t.in2] for t in self.interactions], dtype=np.intp)
        coeff = np.array([t.coeff for t in self.interactions])
        return out, in1, in2, coeff

    @property
    def is_inviscid(self) -> bool:
        return not np.any(self.rates)

    def quadratic(self, x: np.ndarray) -> np.ndarray:
        """The bilinear part G(x, x), without dissipation."""
        m = len(self.modes)
        if not self.interactions:
            return np.zeros(m)
        out, in1, in2, coeff = self._compiled
        return np.bincount(out, weights=coeff * x[in1] * x[in2], minlength=m)

    def rhs(self, x: np.ndarray) -> np.ndarray:
        """Full right-hand side -D x + G(x, x)."""
        return self.quadratic(x) - self.rates * x

    def mode(self, label: str) -> Mode:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(label)

    def with_dissipation(self, dissipation: Mapping[Mode, float]) -> "CircuitSpec":
        return CircuitSpec(self.modes, self.interactions, dissipation)


@dataclass(frozen=True)
class StateVector:
    """Amplitudes at one instant, aligned with a circuit's mode order."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float))

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)))


def _check_aligned(spec: CircuitSpec, state: StateVector) -> None:
    if len(state.x) != len(spec.modes):
        raise SpecError(
            f"state has {len(state.x)} entries, circuit has {len(spec.modes)} modes"
        )
    if not state.is_finite:
        raise NonFiniteStateError("state vector contains non-finite amplitudes")


def assemble_rhs(spec: CircuitSpec, state: StateVector) -> StateVector:
    """Evaluate dX/dt = -D X + G(X, X) at ``state``.

    Pure function of (spec, state); rejects non-finite input.
    """
    _check_aligned(spec, state)
    return StateVector(state.t, spec.rhs(state.x))


def total_energy(state: StateVector | np.ndarray) -> float:
    """Half the squared amplitude norm."""
    x = state.x if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    return 0.5 * float(np.dot(x, x))


@dataclass(frozen=True)
class CancellationReport:
    """Result of the structural energy-flux audit."""

    passed: bool
    max_residual: float
    violating_triples: tuple[tuple[tuple[Mode, Mode, Mode], float], ...]


def check_cancellation_structural(
    spec: CircuitSpec, tol: float = STRUCTURAL_TOL
) -> CancellationReport:
    """Audit that coefficients over every mode multiset sum to zero.

    For each unordered multiset {j_a, j_b, j_c} of modes, the coefficients of
    all stored terms whose (out, in1, in2) assignment realizes that multiset
    are summed; the residual is normalized by the largest |coeff| in the
    triple.  A circuit with no interactions passes vacuously.
    """
    sums: dict[tuple[Mode, Mode, Mode], float] = {}
    scales: dict[tuple[Mode, Mode, Mode], float] = {}
    for term in spec.interactions:
        key = term.mode_multiset()
        sums[key] = sums.get(key, 0.0) + term.coeff
        scales[key] = max(scales.get(key, 0.0), abs(term.coeff))
    worst = 0.0
    violations = []
    for key, total in sums.items():
        residual = abs(total) / scales[key]
        worst = max(worst, residual)
        if residual > tol:
            violations.append((key, residual))
    violations.sort(key=lambda item: -item[1])
    return CancellationReport(not violations, worst, tuple(violations))


def check_cancellation_numeric(spec: CircuitSpec, n_samples: int, seed: int) -> float:
    """Max of |G(X,X) . X| over deterministic pseudo-random unit-norm states.

    Dissipation is excluded; a structurally cancelling circuit returns
    a value at rounding level (<= 1e-12 for sane coefficient magnitudes).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    m = len(spec.modes)
    worst = 0.0
    for _ in range(n_samples):
        x = rng.standard_normal(m)
        norm = np.linalg.norm(x)
        if norm == 0.0:
            continue
        x /= norm
        worst = max(worst, abs(float(np.dot(spec.quadratic(x), x))))
    return worst


def amplifier_seeded_modes(spec: CircuitSpec) -> tuple[Mode, ...]:
    """Modes that grow in proportion to themselves (amplifier outputs).

    Structural signature: some term feeds the mode a positive multiple of a
    product involving the mode itself.  These modes pass through amplitudes
    exponentially far below the rest of the system and deserve a much
    smaller absolute tolerance.
    """
    seeded = []
    for m in spec.modes:
        for t in spec.interactions:
            if t.out == m and t.coeff > 0 and m in (t.in1, t.in2):
                seeded.append(m)
                break
    return tuple(seeded)
