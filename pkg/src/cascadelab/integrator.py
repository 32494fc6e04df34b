"""Deterministic adaptive integration of quadratic circuits.

Embedded explicit Dormand-Prince 5(4) pair with a proportional-integral
step controller, quartic dense output, component-wise tolerances, and
bisection event location on the dense output.  Everything is plain float
arithmetic with no hidden state, so identical inputs reproduce identical
trajectories bit for bit on one platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .circuit import CircuitSpec, StateVector, _check_aligned
from .errors import (
    DivergenceError,
    EventNotFoundError,
    SpecError,
    StiffnessError,
    WindowExhaustedError,
)

# Dormand-Prince 5(4) tableau (FSAL: stage 7 equals the accepted solution).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# extra weights for the quartic dense-output polynomial
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)
_ORDER = 5
_PI_EXPO = 0.2 - 0.75 * 0.04
_PI_BETA = 0.04
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances, step bounds and sampling cadence for one integration.

    ``atol`` is the scalar default absolute tolerance; ``atol_overrides``
    maps mode labels to per-mode values (amplifier-seeded modes live many
    orders of magnitude below the rest and need a far smaller one).
    ``sample_interval=None`` stores every accepted step; a positive value
    stores dense-output resamples at that cadence instead.
    """

    rtol: float = 1e-10
    atol: float = 1e-14
    atol_overrides: Mapping[str, float] = field(default_factory=dict)
    h_init: float | None = None
    h_min: float = 0.0
    h_max: float = math.inf
    event_tol: float = 1e-9
    sample_interval: float | None = None
    max_steps: int = 50_000_000
    # conservative default: long inviscid runs hold energy drift well under
    # tolerance-proportional accumulation
    safety: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.rtol <= 1e-3:
            raise ValueError("rtol must satisfy 0 < rtol <= 1e-3")
        if self.atol <= 0.0 or any(v <= 0.0 for v in self.atol_overrides.values()):
            raise ValueError("absolute tolerances must be positive")
        if self.h_min > self.h_max:
            raise ValueError("h_min must not exceed h_max")
        if self.event_tol <= 0.0:
            raise ValueError("event_tol must be positive")
        if self.sample_interval is not None and self.sample_interval <= 0.0:
            raise ValueError("sample_interval must be positive when set")

    def atol_vector(self, spec: CircuitSpec) -> np.ndarray:
        # overrides may pre-register labels for modes a growing window has
        # not created yet; those are simply not in effect
        by_label = {m.label: j for j, m in enumerate(spec.modes)}
        atol = np.full(len(spec.modes), self.atol)
        for label, value in self.atol_overrides.items():
            j = by_label.get(label)
            if j is not None:
                atol[j] = value
        return atol


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution with its running dissipation ledger.

    ``dissipation`` holds the cumulative integral of sum(nu_j X_j^2) up to
    each sample time; it is identically zero for inviscid circuits.
    """

    times: np.ndarray
    states: np.ndarray
    dissipation: np.ndarray
    accepted: int
    rejected: int

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> StateVector:
        return StateVector(self.t_final, self.states[-1])

    @property
    def initial_state(self) -> StateVector:
        return StateVector(float(self.times[0]), self.states[0])

    @property
    def dissipation_integral(self) -> float:
        return float(self.dissipation[-1])

    @property
    def n_samples(self) -> int:
        return len(self.times)


def stitch(legs: Sequence[Trajectory], width: int) -> Trajectory:
    """Concatenate trajectory legs, zero-padding states to ``width`` columns.

    Consecutive legs must abut in time (the first sample of each leg repeats
    the last sample of the previous one and is dropped); dissipation ledgers
    are offset so the result is cumulative across the whole run.
    """
    times, states, diss = [], [], []
    offset = 0.0
    accepted = rejected = 0
    for i, leg in enumerate(legs):
        pad = width - leg.states.shape[1]
        if pad < 0:
            raise ValueError("leg wider than requested width")
        block = np.pad(leg.states, ((0, 0), (0, pad)))
        start = 0
        if i > 0:
            if leg.times[0] != times[-1][-1]:
                raise ValueError("legs do not abut in time")
            start = 1
        times.append(leg.times[start:])
        states.append(block[start:])
        diss.append(leg.dissipation[start:] + offset)
        offset += leg.dissipation_integral
        accepted += leg.accepted
        rejected += leg.rejected
    return Trajectory(
        np.concatenate(times), np.vstack(states), np.concatenate(diss), accepted, rejected
    )


class _DenseStep:
    """Quartic interpolant over one accepted step."""

    def __init__(self, t0, h, y0, y1, k):
        self.t0 = t0
        self.h = h
        ydiff = y1 - y0
        bspl = h * k[0] - ydiff
        self.r = (
            y0,
            ydiff,
            bspl,
            ydiff - h * k[6] - bspl,
            h * (_D @ k),
        )

    def __call__(self, t: float) -> np.ndarray:
        theta = (t - self.t0) / self.h
        r1, r2, r3, r4, r5 = self.r
        return r1 + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)))


def _initial_step(rhs, t0, y0, f0, sc, h_max):
    """Deterministic starting step size (standard two-trial heuristic)."""
    d0 = math.sqrt(float(np.mean((y0 / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, h_max)
    y1 = y0 + h0 * f0
    f1 = rhs(y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / sc) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / _ORDER)
    return min(100 * h0, h1, h_max)


class _Stepper:
    """Adaptive stepping engine; one instance per integration (not shared)."""

    def __init__(self, spec: CircuitSpec, state0: StateVector, cfg: IntegratorConfig):
        _check_aligned(spec, state0)
        self.spec = spec
        self.cfg = cfg
        self.rhs = spec.rhs
        self.nu = spec.rates
        self.viscous = bool(np.any(self.nu))
        self.t = state0.t
        self.y = state0.x.copy()
        self.f = self.rhs(self.y)
        self.atol = cfg.atol_vector(spec)
        self.fixed = cfg.h_min == cfg.h_max and cfg.h_min > 0.0
        self.err_old = 1e-4
        self.accepted = 0
        self.rejected = 0
        self.diss = 0.0
        self.h = cfg.h_min if self.fixed else (
            cfg.h_init
            if cfg.h_init is not None
            else _initial_step(
                self.rhs, self.t, self.y,
                self.f, self.atol + cfg.rtol * np.abs(self.y), cfg.h_max,
            )
        )

    def _error_norm(self, y0, y1, err_vec):
        # max norm: the per-step error bound holds for every component,
        # which is what keeps amplifier-seeded modes honest at their own
        # (far smaller) absolute tolerance
        sc = self.atol + self.cfg.rtol * np.maximum(np.abs(y0), np.abs(y1))
        return float(np.max(np.abs(err_vec) / sc))

    def step(self, t_limit: float) -> _DenseStep:
        """Advance one accepted step, never past ``t_limit``."""
        cfg = self.cfg
        for _ in range(10_000):
            h = min(self.h, t_limit - self.t, cfg.h_max)
            if not self.fixed and h < cfg.h_min:
                raise StiffnessError(
                    f"step size {h:.3e} fell below h_min at t={self.t!r}",
                    self.t, StateVector(self.t, self.y),
                )
            if self.t + h == self.t:
                raise StiffnessError(
                    f"step size underflowed at t={self.t!r}",
                    self.t, StateVector(self.t, self.y),
                )
            k = np.empty((7, len(self.y)))
            k[0] = self.f
            # overflow during stage evaluation is handled via the finiteness
            # check below, not as a warning
            with np.errstate(over="ignore", invalid="ignore"):
                for i in range(1, 7):
                    k[i] = self.rhs(self.y + h * (_A[i] @ k[:i]))
                y1 = self.y + h * (_B5 @ k)
            if not np.all(np.isfinite(y1)):
                if self.fixed:
                    raise DivergenceError(
                        f"non-finite state at t={self.t!r}",
                        self.t, StateVector(self.t, self.y),
                    )
                self.rejected += 1
                self.h = h * 0.1
                if self.h < max(cfg.h_min, 1e-300) or self.t + self.h == self.t:
                    raise DivergenceError(
                        f"non-finite state at t={self.t!r}",
                        self.t, StateVector(self.t, self.y),
                    )
                continue
            err = self._error_norm(self.y, y1, h * (_E @ k))
            if self.fixed or err <= 1.0:
                dense = _DenseStep(self.t, h, self.y, y1, k)
                if self.viscous:
                    self.diss += self._dissipation_increment(dense, self.t, self.t + h)
                self.t += h
                self.y = y1
                self.f = k[6]  # FSAL
                self.accepted += 1
                if not self.fixed:
                    err = max(err, 1e-10)
                    fac = cfg.safety * err ** (-_PI_EXPO) * self.err_old ** _PI_BETA
                    self.h = h * min(5.0, max(0.2, fac))
                    self.err_old = err
                return dense
            self.rejected += 1
            fac = cfg.safety * err ** (-_PI_EXPO) * self.err_old ** _PI_BETA
            self.h = h * min(1.0, max(0.1, fac))
        raise StiffnessError(
            f"10000 consecutive step rejections at t={self.t!r}",
            self.t, StateVector(self.t, self.y),
        )

    def _dissipation_increment(self, dense, ta, tb):
        """Gauss-Legendre quadrature of sum(nu_j X_j^2) over [ta, tb]."""
        mid = 0.5 * (ta + tb)
        half = 0.5 * (tb - ta)
        total = 0.0
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            x = dense(mid + half * node)
            total += w * float(np.dot(self.nu, x * x))
        return half * total


class _SampleBuffer:
    def __init__(self, stepper: _Stepper, cfg: IntegratorConfig):
        self.stepper = stepper
        self.interval = cfg.sample_interval
        self.t0 = stepper.t
        self.next_index = 1
        self.times = [stepper.t]
        self.states = [stepper.y.copy()]
        self.diss = [stepper.diss]

    def _append(self, t, x, d):
        if t > self.times[-1]:
            self.times.append(t)
            self.states.append(x)
            self.diss.append(d)

    def after_step(self, dense: _DenseStep, diss_before: float):
        st = self.stepper
        if self.interval is None:
            self._append(st.t, st.y.copy(), st.diss)
            return
        while True:
            t_next = self.t0 + self.next_index * self.interval
            if t_next > st.t:
                break
            x = dense(t_next)
            # dissipation at interior cadence points: quadrature up to t_next
            d = diss_before
            if st.viscous:
                d += st._dissipation_increment(dense, dense.t0, t_next)
            self._append(t_next, x, d)
            self.next_index += 1

    def finish(self, t_end=None, x_end=None):
        if t_end is not None:
            self._append(t_end, x_end, self.stepper.diss)
        elif self.interval is not None:
            self._append(self.stepper.t, self.stepper.y.copy(), self.stepper.diss)
        return Trajectory(
            np.array(self.times),
            np.vstack(self.states),
            np.array(self.diss),
            self.stepper.accepted,
            self.stepper.rejected,
        )


def integrate(
    spec: CircuitSpec, state0: StateVector, t_end: float, cfg: IntegratorConfig
) -> Trajectory:
    """Integrate the circuit from ``state0`` to ``t_end``.

    Local error is controlled component-wise to atol_j + rtol*|X_j|.  The
    returned trajectory carries the dissipation integral accumulated with
    the same interpolation order as the step polynomial.
    """
    if not t_end > state0.t:
        raise ValueError("t_end must exceed the initial time")
    stepper = _Stepper(spec, state0, cfg)
    buf = _SampleBuffer(stepper, cfg)
    for _ in range(cfg.max_steps):
        diss_before = stepper.diss
        dense = stepper.step(t_end)
        buf.after_step(dense, diss_before)
        if stepper.t >= t_end:
            return buf.finish(t_end=t_end if buf.times[-1] < t_end else None,
                              x_end=stepper.y.copy())
    raise StiffnessError(
        f"exceeded {cfg.max_steps} steps before t_end",
        stepper.t, StateVector(stepper.t, stepper.y),
    )


EventFunction = Callable[[float, np.ndarray], float]


@dataclass(frozen=True)
class EventResult:
    t_event: float
    state: StateVector
    trajectory: Trajectory


def integrate_until(
    spec: CircuitSpec,
    state0: StateVector,
    event: EventFunction,
    t_max: float,
    cfg: IntegratorConfig,
) -> EventResult:
    """Integrate until the first sign change of ``event(t, X)``.

    The crossing is bracketed on the dense output (scanning a few interior
    points of each accepted step so an interior double crossing is not
    stepped over) and bisected essentially to rounding level, far inside the
    ``event_tol`` contract.  Raises EventNotFoundError (carrying the budget
    and the partial trajectory) if no sign change occurs by ``t_max``.
    """
    if not t_max > state0.t:
        raise ValueError("time budget must exceed the initial time")
    g0 = event(state0.t, state0.x)
    if g0 == 0.0:
        raise ValueError("event function must be nonzero at the initial state")
    stepper = _Stepper(spec, state0, cfg)
    buf = _SampleBuffer(stepper, cfg)
    sign0 = math.copysign(1.0, g0)
    n_scan = 8
    for _ in range(cfg.max_steps):
        t_prev = stepper.t
        diss_before = stepper.diss
        dense = stepper.step(t_max)
        bracket = None
        ta, ga = t_prev, g0
        for j in range(1, n_scan + 1):
            tb = t_prev + (stepper.t - t_prev) * j / n_scan
            if j == n_scan:
                tb = stepper.t
            gb = event(tb, dense(tb) if tb < stepper.t else stepper.y)
            if gb == 0.0 or math.copysign(1.0, gb) != sign0:
                bracket = (ta, tb)
                break
            ta, ga = tb, gb
        if bracket is not None:
            t_event = _bisect(event, dense, bracket[0], bracket[1], sign0, cfg.event_tol)
            x_event = dense(t_event)
            d_event = diss_before
            if stepper.viscous:
                d_event += stepper._dissipation_increment(dense, dense.t0, t_event)
            buf._append(t_event, x_event, d_event)
            traj = Trajectory(
                np.array(buf.times), np.vstack(buf.states), np.array(buf.diss),
                stepper.accepted, stepper.rejected,
            )
            return EventResult(t_event, StateVector(t_event, x_event), traj)
        g0 = event(stepper.t, stepper.y)
        buf.after_step(dense, diss_before)
        if stepper.t >= t_max:
            raise EventNotFoundError(
                f"no event sign change in [{state0.t!r}, {t_max!r}]",
                budget=t_max, trajectory=buf.finish(),
            )
    raise StiffnessError(
        f"exceeded {cfg.max_steps} steps before the event",
        stepper.t, StateVector(stepper.t, stepper.y),
    )


def _bisect(event, dense, ta, tb, sign0, event_tol):
    """Bisect a bracketed sign change on the dense output."""
    floor = max(4.0 * abs(tb) * 2.0**-52, 1e-300)
    tol = min(event_tol, max(floor, 0.0))
    for _ in range(200):
        if tb - ta <= tol:
            break
        tm = 0.5 * (ta + tb)
        if tm <= ta or tm >= tb:
            break
        gm = event(tm, dense(tm))
        if gm == 0.0:
            return tm
        if math.copysign(1.0, gm) != sign0:
            tb = tm
        else:
            ta = tm
    return tb


@dataclass(frozen=True)
class WindowPolicy:
    """How a scale window grows: trigger threshold, builder, and hard cap.

    ``build(n_hi)`` must return the same circuit extended to top scale
    ``n_hi``, with the previous modes as a prefix of the new mode order.
    """

    threshold: float
    build: Callable[[int], CircuitSpec]
    n_cap: int

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("policy threshold must lie in (0, 1)")


def top_scale_energy_fraction(spec: CircuitSpec, x: np.ndarray) -> float:
    """Share of total energy sitting at the highest scale of the window."""
    top = max(m.scale for m in spec.modes)
    idx = [j for j, m in enumerate(spec.modes) if m.scale == top]
    total = float(np.dot(x, x))
    if total == 0.0:
        return 0.0
    return float(np.dot(x[idx], x[idx])) / total


def extend_window(
    spec: CircuitSpec, state: StateVector, policy: WindowPolicy
) -> tuple[CircuitSpec, StateVector]:
    """Append the next scale's modes with amplitude exactly zero.

    The circuit is regenerated by the policy's builder; energy is unchanged.
    Raises WindowExhaustedError at the cap (the run is truncated, not
    failed).
    """
    _check_aligned(spec, state)
    top = max(m.scale for m in spec.modes)
    if top + 1 > policy.n_cap:
        raise WindowExhaustedError(f"scale window cap {policy.n_cap} reached")
    new_spec = policy.build(top + 1)
    if new_spec.modes[: len(spec.modes)] != spec.modes:
        raise SpecError("window builder must keep existing modes as a prefix")
    x = np.zeros(len(new_spec.modes))
    x[: len(state.x)] = state.x
    return new_spec, StateVector(state.t, x)
