"""Builders for every system the laboratory studies.

Covers the dyadic shell model and its modified-dissipation variant, the
staged two-mode blowup construction, the five-mode delayed-transfer
circuit, the four-component cascade (the delay circuit chained across a
geometric ladder of scales), and the self-similarity rescaling map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .circuit import CircuitSpec, InteractionTerm, Mode, StateVector
from .errors import (
    EventNotFoundError,
    InvalidParameterError,
    StageFailureError,
    WindowExhaustedError,
)
from .gates import GateParams, amplifier_terms, pump_terms, rotor_terms
from .integrator import (
    IntegratorConfig,
    Trajectory,
    WindowPolicy,
    extend_window,
    integrate_until,
    stitch,
    top_scale_energy_fraction,
)

GAMMA_CAP = 700.0  # exp(-Gamma) must stay representable in double precision


@dataclass(frozen=True)
class TransitionEvent:
    """One checkpoint of an energy cascade: scale, time, peak amplitude."""

    scale: int
    t: float
    amplitude: float

    def __post_init__(self):
        if not self.amplitude > 0.0:
            raise InvalidParameterError("checkpoint amplitude must be positive")


def fit_geometric_gaps(times: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit of log(gap) vs index; returns (ratio, T_star, residual).

    T_star sums the fitted geometric tail onto the last time; it is +inf
    when the fitted ratio is >= 1 (no finite-time accumulation).
    """
    t = np.asarray(times, dtype=float)
    gaps = np.diff(t)
    if len(gaps) < 2:
        raise ValueError("need at least three times to fit a gap ratio")
    if np.any(gaps <= 0.0):
        raise ValueError("times must be strictly increasing")
    k = np.arange(len(gaps), dtype=float)
    logs = np.log(gaps)
    slope, intercept = np.polyfit(k, logs, 1)
    ratio = math.exp(slope)
    residual = math.sqrt(float(np.mean((logs - (intercept + slope * k)) ** 2)))
    if ratio >= 1.0:
        return ratio, math.inf, residual
    t_star = float(t[-1]) + float(gaps[-1]) * ratio / (1.0 - ratio)
    return ratio, t_star, residual


# ---------------------------------------------------------------------------
# dyadic shell model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicParams:
    """Geometric cascade parameters: scale base, dissipation exponent, window."""

    lam: float
    alpha_diss: float
    n_lo: int
    n_hi: int

    def __post_init__(self):
        if not self.lam > 1.0:
            raise InvalidParameterError("lam must exceed 1")
        if self.alpha_diss < 0.0:
            raise InvalidParameterError("alpha_diss must be >= 0")
        if self.n_lo > self.n_hi:
            raise InvalidParameterError("window must be nonempty")

    @property
    def scales(self) -> range:
        return range(self.n_lo, self.n_hi + 1)


def _shell_mode(n: int) -> Mode:
    return Mode(label=f"u{n}", component=1, scale=n)


def dyadic_spec(p: DyadicParams, viscous: bool = True) -> CircuitSpec:
    """Chained-pump shell model: each scale pumps the next at rate lam^n.

    dX_n/dt = -lam^(2 n alpha) X_n + lam^(n-1) X_{n-1}^2 - lam^n X_n X_{n+1},
    with boundary scales losing their out-of-window partner terms.  The
    inviscid variant drops the decay.
    """
    modes = [_shell_mode(n) for n in p.scales]
    terms = []
    for n in range((p.n_lo), p.n_hi):
        lo, hi = _shell_mode(n), _shell_mode(n + 1)
        rate = p.lam ** n
        terms.append(InteractionTerm(out=hi, in1=lo, in2=lo, coeff=rate))
        terms.append(InteractionTerm(out=lo, in1=lo, in2=hi, coeff=-rate))
    dissipation = {}
    if viscous:
        dissipation = {m: p.lam ** (2 * m.scale * p.alpha_diss) for m in modes}
    return CircuitSpec(tuple(modes), tuple(terms), dissipation)


def dyadic_modified_spec(p: DyadicParams, g: Callable[[float], float]) -> CircuitSpec:
    """Shell model variant with decay lam^n / g(lam^n)^2 and widened transfer.

    The pump between adjacent scales gains the cross terms
    lam^n (X_n X_{n+1}) on the feed and lam^n X_{n+1}^2 on the drain, which
    lets a stage hand over all of its energy instead of a fixed fraction.
    ``g`` must be positive (and in practice nondecreasing) on the window.
    """
    modes = [_shell_mode(n) for n in p.scales]
    terms = []
    for n in range(p.n_lo, p.n_hi):
        lo, hi = _shell_mode(n), _shell_mode(n + 1)
        rate = p.lam ** n
        terms.append(InteractionTerm(out=hi, in1=lo, in2=lo, coeff=rate))
        terms.append(InteractionTerm(out=hi, in1=lo, in2=hi, coeff=rate))
        terms.append(InteractionTerm(out=lo, in1=lo, in2=hi, coeff=-rate))
        terms.append(InteractionTerm(out=lo, in1=hi, in2=hi, coeff=-rate))
    dissipation = {}
    for m in modes:
        s = p.lam ** m.scale
        gs = g(s)
        if not gs > 0.0:
            raise InvalidParameterError(f"g(lam^{m.scale}) must be positive, got {gs!r}")
        dissipation[m] = s / gs ** 2
    return CircuitSpec(tuple(modes), tuple(terms), dissipation)


# ---------------------------------------------------------------------------
# staged two-mode blowup run
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedParams:
    """Parameters of the staged blowup construction.

    Each stage k hands energy from scale n0+k to n0+k+1 through a lone
    dissipative pump, stopping when the receiving mode reaches
    lam^(-delta (k+1)); all other modes decay freely.  delta_prime > delta
    is the weight exponent whose weighted sup-norm grows along the run.
    """

    lam: float
    alpha_diss: float
    delta: float
    delta_prime: float
    n0: int
    k_max: int

    def __post_init__(self):
        if not self.lam > 1.0:
            raise InvalidParameterError("lam must exceed 1")
        if not 0.0 < self.alpha_diss < 0.5:
            raise InvalidParameterError("alpha_diss must lie in (0, 1/2)")
        if not 0.0 < self.delta < 1.0 - 2.0 * self.alpha_diss:
            raise InvalidParameterError("delta must lie in (0, 1 - 2 alpha_diss)")
        if not self.delta_prime > self.delta:
            raise InvalidParameterError("delta_prime must exceed delta")
        if self.n0 < 1 or self.k_max < 1:
            raise InvalidParameterError("n0 and k_max must be >= 1")

    def stage_eps(self, k: int) -> float:
        """Smallness parameter of stage k in its own rescaled units."""
        a = 1.0 - 2.0 * self.alpha_diss
        return self.lam ** (-(a * self.n0) - (a - self.delta) * k)

    def stage_budget(self, k: int) -> float:
        """Time allowance for stage k before it is declared failed."""
        return (
            10.0
            * math.atanh(self.lam ** -self.delta)
            * self.lam ** (-self.n0 - k + self.delta * k)
        )


def _pair_spec(p: TruncatedParams, k: int) -> CircuitSpec:
    lo = _shell_mode(p.n0 + k)
    hi = _shell_mode(p.n0 + k + 1)
    rate = p.lam ** (p.n0 + k)
    terms = (
        InteractionTerm(out=lo, in1=lo, in2=hi, coeff=-rate),
        InteractionTerm(out=hi, in1=lo, in2=lo, coeff=rate),
    )
    nu = {m: p.lam ** (2 * m.scale * p.alpha_diss) for m in (lo, hi)}
    return CircuitSpec((lo, hi), terms, nu)


def rescaled_stage_spec(p: TruncatedParams, stage_eps: float) -> CircuitSpec:
    """One pump stage in its own units: dx/dt = -e x - x y, dy/dt = -lam^(-2a) e y + x^2.

    At stage_eps = 0 this is the pure pump, whose output reaches
    lam^(-delta) at exactly atanh(lam^(-delta)).
    """
    if stage_eps < 0.0:
        raise InvalidParameterError("stage_eps must be >= 0")
    x = Mode("x", component=1, scale=0)
    y = Mode("y", component=1, scale=1)
    terms = (
        InteractionTerm(out=x, in1=x, in2=y, coeff=-1.0),
        InteractionTerm(out=y, in1=x, in2=x, coeff=1.0),
    )
    nu = {}
    if stage_eps > 0.0:
        nu = {x: stage_eps, y: p.lam ** (-2.0 * p.alpha_diss) * stage_eps}
    return CircuitSpec((x, y), terms, nu)


@dataclass(frozen=True)
class TruncatedRun:
    """Outcome of the staged blowup run."""

    checkpoints: tuple[TransitionEvent, ...]
    trajectory: Trajectory
    T_star_estimate: float
    gap_ratio: float
    fit_residual: float
    spec: CircuitSpec

    @property
    def gaps(self) -> np.ndarray:
        return np.diff([e.t for e in self.checkpoints])


def truncated_blowup_run(p: TruncatedParams, cfg: IntegratorConfig) -> TruncatedRun:
    """Run the staged construction for k_max stages and extrapolate T*.

    Stage k integrates the dissipative pump between scales n0+k and
    n0+k+1 until the receiving amplitude hits lam^(-delta (k+1)); every
    other mode decays exactly (applied analytically, including its share of
    the dissipation ledger).  A stage that misses its threshold within
    10 atanh(lam^-delta) lam^(-n0-k+delta k) raises StageFailureError.
    """
    if p.stage_eps(0) >= 0.1:
        raise InvalidParameterError(
            f"n0={p.n0} leaves stage_eps(0)={p.stage_eps(0):.3g} >= 0.1; increase n0"
        )
    modes = [_shell_mode(n) for n in range(p.n0, p.n0 + p.k_max + 1)]
    nu = np.array([p.lam ** (2 * m.scale * p.alpha_diss) for m in modes])
    full_terms = []
    for n in range(p.n0, p.n0 + p.k_max):
        lo, hi = _shell_mode(n), _shell_mode(n + 1)
        rate = p.lam ** n
        full_terms.append(InteractionTerm(out=hi, in1=lo, in2=lo, coeff=rate))
        full_terms.append(InteractionTerm(out=lo, in1=lo, in2=hi, coeff=-rate))
    spec = CircuitSpec(tuple(modes), tuple(full_terms), dict(zip(modes, nu)))

    x = np.zeros(len(modes))
    x[0] = 1.0
    t = 0.0
    checkpoints = [TransitionEvent(p.n0, 0.0, 1.0)]
    legs = []
    for k in range(p.k_max):
        pair = _pair_spec(p, k)
        target = p.lam ** (-p.delta * (k + 1))
        budget = p.stage_budget(k)
        state0 = StateVector(t, np.array([x[k], 0.0]))
        try:
            res = integrate_until(
                pair, state0, lambda _, y: y[1] - target, t + budget, cfg
            )
        except EventNotFoundError as exc:
            raise StageFailureError(
                f"stage {k} missed its threshold {target:.6g} within budget {budget:.3g}",
                stage=k,
            ) from exc
        leg = res.trajectory
        dt = leg.times - t
        states = np.empty((len(leg.times), len(modes)))
        decay = np.exp(-np.outer(dt, nu))
        states[:] = x * decay
        states[:, k] = leg.states[:, 0]
        states[:, k + 1] = leg.states[:, 1]
        inactive = np.ones(len(modes), dtype=bool)
        inactive[[k, k + 1]] = False
        shed = 0.5 * (x[inactive] ** 2) @ (1.0 - decay[:, inactive].T ** 2)
        legs.append(
            Trajectory(leg.times, states, leg.dissipation + shed,
                       leg.accepted, leg.rejected)
        )
        x = states[-1].copy()
        t = res.t_event
        checkpoints.append(TransitionEvent(p.n0 + k + 1, t, target))
    trajectory = stitch(legs, len(modes))
    ratio, t_star, residual = fit_geometric_gaps([e.t for e in checkpoints])
    return TruncatedRun(tuple(checkpoints), trajectory, t_star, ratio, residual, spec)


# ---------------------------------------------------------------------------
# five-mode delayed-transfer circuit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayParams:
    """Delayed-transfer circuit parameters.

    ``gamma`` replaces the astronomically stiff K^10 of the asymptotic
    regime; it defaults to K^10 and must stay below 700 so exp(-gamma)
    remains representable.  Desk-scale runs use gamma in roughly [20, 60].
    """

    K: float
    eps: float
    gamma: float | None = None

    def __post_init__(self):
        if self.K < 1.0:
            raise InvalidParameterError("K must be >= 1")
        if not 0.0 < self.eps < 1.0:
            raise InvalidParameterError("eps must lie in (0, 1)")
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.K) ** 10)
        if not 0.0 < self.gamma <= GAMMA_CAP:
            raise InvalidParameterError(f"gamma must lie in (0, {GAMMA_CAP:g}]")


DELAY_LABELS = ("a", "b", "c", "d", "a_next")


def delay_modes() -> tuple[Mode, ...]:
    return tuple(Mode(label, component=i + 1, scale=0) for i, label in enumerate(DELAY_LABELS))


def delay_circuit_spec(p: DelayParams) -> CircuitSpec:
    """The five-gate superposition producing a delayed, abrupt handover.

    a feeds b slowly (pump eps) and seeds c minutely (pump eps^2 e^-gamma);
    b ignites c exponentially (amplifier gamma/eps); once c is large the
    rotor (1/eps^2) swings energy between a and d, and the pump K drains d
    into a_next.  Inviscid.
    """
    a, b, c, d, a_next = delay_modes()
    eps, gamma, K = p.eps, p.gamma, p.K
    terms = []
    terms += rotor_terms(a, d, c, GateParams(eps ** -2))
    terms += pump_terms(a, b, GateParams(eps))
    terms += pump_terms(a, c, GateParams(eps ** 2 * math.exp(-gamma)))
    terms += amplifier_terms(b, c, GateParams(gamma / eps))
    terms += pump_terms(d, a_next, GateParams(K))
    return CircuitSpec(delay_modes(), tuple(terms))


def delay_initial_state(t: float = 0.0) -> StateVector:
    return StateVector(t, np.array([1.0, 0.0, 0.0, 0.0, 0.0]))


# ---------------------------------------------------------------------------
# four-component cascade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CascadeParams:
    """Parameters of the chained-circuit cascade.

    Four components per scale; coefficients follow the fixed sixteen-row
    table expanded across the window with prefactor (1+eps0)^(5(n-mu3)/2).
    ``gamma`` plays the role of K^10 exactly as in DelayParams.  The
    viscous variant decays each mode at (1+eps0)^(alpha_exponent * n).
    """

    eps0: float
    eps: float
    K: float
    gamma: float | None = None
    n0: int = 0
    window: tuple[int, int] | None = None
    viscous: bool = False
    alpha_exponent: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.eps0 < 1.0:
            raise InvalidParameterError("eps0 must lie in (0, 1)")
        if not 0.0 < self.eps < 1.0:
            raise InvalidParameterError("eps must lie in (0, 1)")
        if self.K < 1.0:
            raise InvalidParameterError("K must be >= 1")
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.K) ** 10)
        if not 0.0 < self.gamma <= GAMMA_CAP:
            raise InvalidParameterError(f"gamma must lie in (0, {GAMMA_CAP:g}]")
        if self.window is None:
            object.__setattr__(self, "window", (self.n0, self.n0 + 3))
        lo, hi = self.window
        if lo > hi:
            raise InvalidParameterError("window must be nonempty")
        if not lo <= self.n0 <= hi:
            raise InvalidParameterError("n0 must lie inside the window")

    @property
    def scales(self) -> range:
        return range(self.window[0], self.window[1] + 1)


N_COMPONENTS = 4
_COMPONENT_LETTERS = "abcd"


@dataclass(frozen=True)
class CascadeCoefficient:
    """One row of the interaction table: (i1, i2, i3, mu1, mu2, mu3) -> value."""

    i1: int
    i2: int
    i3: int
    mu1: int
    mu2: int
    mu3: int
    value: float


def cascade_coefficients(p: CascadeParams) -> tuple[CascadeCoefficient, ...]:
    """The sixteen nonzero structure constants of the cascade.

    Symmetric under swapping (i1, mu1) with (i2, mu2), and summing to zero
    over the orderings of every index triple (the energy audit).
    """
    eps, gamma, K, eps0 = p.eps, p.gamma, p.K, p.eps0
    rot = eps ** -2 / 2.0
    seed = eps ** 2 * math.exp(-gamma)
    amp = gamma / eps
    hop = (1.0 + eps0) ** 2.5 * K
    rows = [
        (3, 4, 1, 0, 0, 0, -rot),
        (4, 3, 1, 0, 0, 0, -rot),
        (1, 3, 4, 0, 0, 0, rot),
        (3, 1, 4, 0, 0, 0, rot),
        (1, 2, 1, 0, 0, 0, -eps / 2.0),
        (2, 1, 1, 0, 0, 0, -eps / 2.0),
        (1, 1, 2, 0, 0, 0, eps),
        (1, 3, 1, 0, 0, 0, -seed / 2.0),
        (3, 1, 1, 0, 0, 0, -seed / 2.0),
        (1, 1, 3, 0, 0, 0, seed),
        (3, 3, 2, 0, 0, 0, -amp),
        (2, 3, 3, 0, 0, 0, amp / 2.0),
        (3, 2, 3, 0, 0, 0, amp / 2.0),
        (4, 4, 1, 0, 0, 1, hop),
        (1, 4, 4, 1, 0, 0, -hop / 2.0),
        (4, 1, 4, 0, 1, 0, -hop / 2.0),
    ]
    return tuple(CascadeCoefficient(*row) for row in rows)


def cascade_mode(i: int, n: int) -> Mode:
    return Mode(label=f"{_COMPONENT_LETTERS[i - 1]}{n}", component=i, scale=n)


def cascade_modes(p: CascadeParams) -> tuple[Mode, ...]:
    """Scale-major mode order, so window growth appends at the end."""
    return tuple(
        cascade_mode(i, n) for n in p.scales for i in range(1, N_COMPONENTS + 1)
    )


def _expand_cascade(p: CascadeParams):
    lo, hi = p.window
    kept, dropped = [], []
    for n in p.scales:
        for row in cascade_coefficients(p):
            n1 = n - row.mu3 + row.mu1
            n2 = n - row.mu3 + row.mu2
            coeff = row.value * (1.0 + p.eps0) ** (2.5 * (n - row.mu3))
            if lo <= n1 <= hi and lo <= n2 <= hi:
                kept.append(
                    InteractionTerm(
                        out=cascade_mode(row.i3, n),
                        in1=cascade_mode(row.i1, n1),
                        in2=cascade_mode(row.i2, n2),
                        coeff=coeff,
                    )
                )
            else:
                dropped.append((row, n))
    return kept, dropped


def cascade_spec(p: CascadeParams) -> CircuitSpec:
    """The cascade over the window, boundary terms dropped whole-triple.

    Every interaction term of a cancelling triple references all three of
    its modes, so dropping the terms that reach outside the window removes
    whole triples and preserves the energy audit exactly.
    """
    kept, _ = _expand_cascade(p)
    modes = cascade_modes(p)
    dissipation = {}
    if p.viscous:
        dissipation = {m: (1.0 + p.eps0) ** (p.alpha_exponent * m.scale) for m in modes}
    return CircuitSpec(modes, tuple(kept), dissipation)


def cascade_dropped_terms(p: CascadeParams) -> tuple[tuple[CascadeCoefficient, int], ...]:
    """Boundary manifest: table rows (with their output scale) not expanded."""
    _, dropped = _expand_cascade(p)
    return tuple(dropped)


def cascade_initial_state(p: CascadeParams, spec: CircuitSpec) -> StateVector:
    """Unit amplitude on component 1 at scale n0, zero elsewhere."""
    x = np.zeros(len(spec.modes))
    x[spec.index[cascade_mode(1, p.n0)]] = 1.0
    return StateVector(0.0, x)


@dataclass(frozen=True)
class CascadeRun:
    spec: CircuitSpec
    trajectory: Trajectory
    truncated: bool


def cascade_run(
    p: CascadeParams,
    cfg: IntegratorConfig,
    t_end: float | None = None,
    threshold: float = 1e-12,
    max_extra_scales: int = 6,
) -> CascadeRun:
    """Integrate the cascade with a sliding window.

    Whenever the top scale of the window holds more than ``threshold`` of
    the total energy, one scale is appended (with exactly zero amplitude)
    and integration continues; scales below n0 are never created.  The run
    ends at ``t_end`` (default: 8 transfer times of the starting scale) or
    when the window cap n0 + window + max_extra_scales is reached, in which
    case it is reported truncated.
    """
    if t_end is None:
        t_end = 8.0 * (1.0 + p.eps0) ** (-2.5 * p.n0)
    spec = cascade_spec(p)
    state = cascade_initial_state(p, spec)
    n_cap = p.window[1] + max_extra_scales
    policy = WindowPolicy(
        threshold=threshold,
        build=lambda n_hi: cascade_spec(replace(p, window=(p.window[0], n_hi))),
        n_cap=n_cap,
    )
    legs = []
    truncated = False
    while True:
        current = spec

        def trigger(_, x, current=current):
            return top_scale_energy_fraction(current, x) - threshold

        try:
            res = integrate_until(spec, state, trigger, t_end, cfg)
        except EventNotFoundError as exc:
            legs.append(exc.trajectory)
            break
        legs.append(res.trajectory)
        try:
            spec, state = extend_window(spec, res.state, policy)
        except WindowExhaustedError:
            truncated = True
            break
    trajectory = stitch(legs, len(spec.modes))
    return CascadeRun(spec, trajectory, truncated)


def rescale_run(
    traj: Trajectory, p: CascadeParams, N: int, e_N: float, t_N: float
) -> Trajectory:
    """Re-express a trajectory in the units of scale N and amplitude e_N.

    tau = (1+eps0)^(5N/2) e_N (t - t_N), amplitudes divide by e_N, the
    dissipation ledger by e_N^2; column j then represents the mode whose
    scale index shifted down by N.  Pure relabeling of samples.
    """
    if not e_N > 0.0:
        raise InvalidParameterError("e_N must be positive")
    factor = (1.0 + p.eps0) ** (2.5 * N) * e_N
    return Trajectory(
        factor * (traj.times - t_N),
        traj.states / e_N,
        traj.dissipation / e_N ** 2,
        traj.accepted,
        traj.rejected,
    )


# ---------------------------------------------------------------------------
# bundled demonstration systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BundledSystem:
    spec: CircuitSpec
    state0: StateVector


def bundled_systems() -> dict[str, BundledSystem]:
    """Named inviscid systems used by demos and the conservation suite."""
    x, y, z = (Mode(s, component=i + 1, scale=0) for i, s in enumerate("xyz"))
    one = GateParams(1.0)
    pump = CircuitSpec((x, y), tuple(pump_terms(x, y, one)))
    amplifier = CircuitSpec((x, y), tuple(amplifier_terms(x, y, one)))
    rotor = CircuitSpec((x, y, z), tuple(rotor_terms(x, y, z, one)))
    delay = delay_circuit_spec(DelayParams(K=2.0, eps=0.2, gamma=5.0))
    dyadic = dyadic_spec(DyadicParams(lam=2.0, alpha_diss=0.0, n_lo=0, n_hi=3), viscous=False)
    cascade_p = CascadeParams(eps0=0.5, eps=0.25, K=1.5, gamma=4.0, n0=0, window=(0, 1))
    cascade = cascade_spec(cascade_p)

    def unit(spec, hot, amplitudes=None):
        v = np.zeros(len(spec.modes))
        for label, value in (amplitudes or {hot: 1.0}).items():
            v[spec.index[spec.mode(label)]] = value
        return StateVector(0.0, v)

    return {
        "pump": BundledSystem(pump, unit(pump, "x")),
        "amplifier": BundledSystem(amplifier, unit(amplifier, "x", {"x": 0.9, "y": 0.1})),
        "rotor": BundledSystem(rotor, unit(rotor, "x", {"x": 1.0, "z": 1.0})),
        "delay": BundledSystem(delay, delay_initial_state()),
        "dyadic": BundledSystem(dyadic, unit(dyadic, "u0")),
        "cascade": BundledSystem(cascade, cascade_initial_state(cascade_p, cascade)),
    }
