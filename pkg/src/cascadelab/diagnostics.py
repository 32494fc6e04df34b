"""Observable structure of trajectories: per-scale energies, cascade
checkpoints, blowup extrapolation, energy-ledger residuals and the
regime-shape monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import CircuitSpec, Mode
from .errors import SpecError
from .integrator import Trajectory
from .models import TransitionEvent, fit_geometric_gaps

# a scale must hold at least this share of total energy for its amplitude
# peak to count as a cascade checkpoint
CHECKPOINT_ENERGY_SHARE = 0.4
# discrete local maxima must drop by this relative amount afterwards, so that
# rounding-level wiggles on a monotone inflow are not misread as peaks
_PEAK_DROP = 1e-9


def _require_aligned(traj: Trajectory, spec: CircuitSpec) -> None:
    if traj.states.shape[1] != len(spec.modes):
        raise SpecError(
            f"trajectory width {traj.states.shape[1]} does not match "
            f"{len(spec.modes)} modes"
        )


@dataclass(frozen=True)
class EnergyProfile:
    """Per-scale energies E_n(t), their total, and the dissipation ledger."""

    times: np.ndarray
    scales: tuple[int, ...]
    per_scale: np.ndarray  # shape (n_samples, n_scales)
    total: np.ndarray
    dissipation: np.ndarray

    def at_scale(self, n: int) -> np.ndarray:
        return self.per_scale[:, self.scales.index(n)]


def energy_profile(traj: Trajectory, spec: CircuitSpec) -> EnergyProfile:
    """Exact per-sample energy sums, grouped by the modes' scale index."""
    _require_aligned(traj, spec)
    scales = tuple(sorted({m.scale for m in spec.modes}))
    per = np.zeros((traj.n_samples, len(scales)))
    for j, m in enumerate(spec.modes):
        per[:, scales.index(m.scale)] += 0.5 * traj.states[:, j] ** 2
    return EnergyProfile(traj.times, scales, per, per.sum(axis=1), traj.dissipation)


def detect_transitions(
    traj: Trajectory, spec: CircuitSpec, peak_band: float = 0.0
) -> list[TransitionEvent]:
    """Cascade checkpoints: per scale, the first dominant peak of component 1.

    A sample counts when it is a discrete local maximum of X_{1,n} (the
    inflow before it non-decreasing, the drop after it genuine rather than
    rounding noise) and the scale holds at least 40% of the total energy
    there.  Scales with no qualifying peak are omitted; events come out
    time-ordered.

    ``peak_band`` regularizes flat-topped peaks: when positive, the event
    time moves back to the first contiguous sample within that relative
    band of the peak value.  Slow post-arrival drains make the exact argmax
    of a flat top ill-conditioned (a negligible perturbation tilts it by
    many samples), while the band's leading edge tracks the energy arrival;
    comparisons between near-identical runs should use a small band.
    """
    _require_aligned(traj, spec)
    if not 0.0 <= peak_band < 1.0:
        raise ValueError("peak_band must lie in [0, 1)")
    profile = energy_profile(traj, spec)
    events = []
    for n in profile.scales:
        col = None
        for j, m in enumerate(spec.modes):
            if m.scale == n and m.component == 1:
                col = j
                break
        if col is None:
            continue
        x = traj.states[:, col]
        e_n = profile.at_scale(n)
        qualifies = e_n >= CHECKPOINT_ENERGY_SHARE * profile.total
        found = _first_dominant_peak(x, qualifies)
        if found is None:
            continue
        if peak_band > 0.0:
            floor = (1.0 - peak_band) * x[found]
            while found > 0 and x[found - 1] >= floor and qualifies[found - 1]:
                found -= 1
        events.append(TransitionEvent(n, float(traj.times[found]), float(x[found])))
    events.sort(key=lambda e: e.t)
    return events


def _first_dominant_peak(x: np.ndarray, qualifies: np.ndarray) -> int | None:
    """Index of the first dominant peak: the running argmax of the whole
    series, interior, later confirmed by a genuine drop.

    Dominance (never exceeded before) keeps two non-transitions out: the
    initial sample of a mode that only decays (a pure-decay run has no
    arrival), and the swing-backs of a donor mode once a rotor starts
    draining it, which stay below its starting amplitude.  Confirmation by
    a relative _PEAK_DROP keeps rounding-level wiggles on a monotone inflow
    from reading as peaks.  A confirmed peak failing the qualification mask
    is consumed and the scan continues.
    """
    best = 0
    consumed = 0
    for i in range(1, len(x)):
        if x[i] > x[best]:
            best = i
        elif (
            best > 0
            and best != consumed
            and x[best] - x[i] > _PEAK_DROP * abs(x[best])
        ):
            if x[best] > 0.0 and qualifies[best]:
                return best
            consumed = best
    return None


@dataclass(frozen=True)
class ExtrapolationResult:
    """Geometric fit of checkpoint gaps; T_star is +inf when ratio >= 1."""

    T_star: float
    ratio: float
    fit_residual: float

    @property
    def blowup_detected(self) -> bool:
        return math.isfinite(self.T_star)


def blowup_extrapolate(events: Sequence[TransitionEvent]) -> ExtrapolationResult:
    """Fit log-gaps of >= 4 checkpoints; finite T_star needs ratio < 1."""
    if len(events) < 4:
        raise ValueError("need at least 4 transition events to extrapolate")
    ratio, t_star, residual = fit_geometric_gaps([e.t for e in events])
    return ExtrapolationResult(t_star, ratio, residual)


def energy_identity_residual(traj: Trajectory) -> float:
    """|E(T) + D(T) - E(0)| / E(0) for the trajectory's energy ledger."""
    e0 = 0.5 * float(traj.states[0] @ traj.states[0])
    if e0 == 0.0:
        raise ValueError("energy identity residual undefined for zero initial energy")
    eT = 0.5 * float(traj.states[-1] @ traj.states[-1])
    return abs(eT + traj.dissipation_integral - e0) / e0


@dataclass(frozen=True)
class BoundConstants:
    """Constants (C1, rho1, C2, rho2) of the locality envelope.

    Below the active scale the energy may not exceed C1 rho1^m e^2 at
    distance m >= 2; the active pair is capped at e^2; above it the cap is
    C2 rho2^-m e^2 for m >= 1.
    """

    c_before: float
    rho_before: float
    c_after: float
    rho_after: float

    @classmethod
    def asymptotic_regime(cls, K: float, eps0: float) -> "BoundConstants":
        """The envelope constants of the large-K regime."""
        return cls(K ** -10, (1 + eps0) ** 0.1, K ** -30, (1 + eps0) ** 10)


@dataclass(frozen=True)
class BoundReport:
    """Worst observed ratio against one envelope bound; pass iff <= 1."""

    bound_id: str
    max_ratio: float
    passed: bool

    @staticmethod
    def of(bound_id: str, max_ratio: float) -> "BoundReport":
        return BoundReport(bound_id, max_ratio, max_ratio <= 1.0)


def monitor_locality_envelope(
    traj: Trajectory,
    events: Sequence[TransitionEvent],
    constants: BoundConstants,
    spec: CircuitSpec,
) -> list[BoundReport]:
    """Check the energy-locality envelope on each inter-checkpoint interval.

    For consecutive checkpoints at scales n-1 and n with base amplitude
    e = e_{n-1}, over the interval [t_{n-1}, t_n]:
      before-en:  E_{n-m}(t) <= C1 rho1^m e^2   (m >= 2)
      during-en:  E_{n-1}(t) + E_n(t) <= e^2
      after-en:   E_{n+m}(t) <= C2 rho2^-m e^2  (m >= 1)
    Reports the worst ratio per bound over all intervals.  Loosening the
    constants can only lower ratios (monotone).
    """
    if not events:
        raise ValueError("need at least one transition event")
    profile = energy_profile(traj, spec)
    worst = {"before-en": 0.0, "during-en": 0.0, "after-en": 0.0}
    by_scale = {e.scale: e for e in events}
    for n, event in sorted(by_scale.items()):
        prev = by_scale.get(n - 1)
        if prev is None:
            continue
        inside = (profile.times >= prev.t) & (profile.times <= event.t)
        if not np.any(inside):
            continue
        e2 = prev.amplitude ** 2
        for m_idx, scale in enumerate(profile.scales):
            env = profile.per_scale[inside, m_idx]
            peak = float(env.max())
            dist = scale - n
            if dist <= -2:
                cap = constants.c_before * constants.rho_before ** (-dist) * e2
                worst["before-en"] = max(worst["before-en"], peak / cap)
            elif dist >= 1:
                cap = constants.c_after * constants.rho_after ** (-dist) * e2
                worst["after-en"] = max(worst["after-en"], peak / cap)
        pair = profile.at_scale(n)[inside] + profile.at_scale(n - 1)[inside]
        worst["during-en"] = max(worst["during-en"], float(pair.max()) / e2)
    return [BoundReport.of(k, v) for k, v in worst.items()]


@dataclass(frozen=True)
class EquipartitionReport:
    """Time-averaged x^2 against half the pair energy, with its a-priori cap."""

    deviation: float
    bound: float
    z_drift: float

    @property
    def within_bound(self) -> bool:
        return self.deviation <= self.bound


def equipartition_check(
    traj: Trajectory,
    spec: CircuitSpec,
    x: Mode,
    y: Mode,
    z: Mode,
    alpha: float,
    window: tuple[float, float],
) -> EquipartitionReport:
    """Rotor equipartition over ``window``: |mean(x^2) - E/2| <= E/(a|z|T).

    ``z`` is assumed near-constant; its maximum relative drift over the
    window is reported alongside so a drifting driver is visible.
    """
    _require_aligned(traj, spec)
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("window must have positive length")
    mask = (traj.times >= t0) & (traj.times <= t1)
    if mask.sum() < 3:
        raise ValueError("window contains too few samples")
    t = traj.times[mask]
    xv = traj.states[mask, spec.index[x]]
    yv = traj.states[mask, spec.index[y]]
    zv = traj.states[mask, spec.index[z]]
    span = t[-1] - t[0]
    mean_x2 = float(np.trapezoid(xv ** 2, t)) / span
    energy = float(np.trapezoid(xv ** 2 + yv ** 2, t)) / span
    z_mean = float(np.trapezoid(zv, t)) / span
    drift = float(np.max(np.abs(zv - z_mean))) / max(abs(z_mean), 1e-300)
    deviation = abs(mean_x2 - 0.5 * energy)
    bound = energy / (alpha * max(abs(z_mean), 1e-300) * span)
    return EquipartitionReport(deviation, bound, drift)
