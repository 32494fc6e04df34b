"""Experiment execution and result emission.

Each run writes, into its own directory: the resolved config, a time-series
CSV (time, mode amplitudes, per-scale energies, dissipation ledger), an
events CSV when the experiment produces cascade checkpoints, a summary in
TOML form, and a manifest listing every emitted file with its SHA-256.
Time-series formatting is fixed at 17 significant digits, so identical
configs reproduce byte-identical data files.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .circuit import (
    CircuitSpec,
    Mode,
    StateVector,
    amplifier_seeded_modes,
    check_cancellation_numeric,
    check_cancellation_structural,
)
from .config import RunConfig, serialize_config, _emit_section
from .diagnostics import (
    BoundConstants,
    blowup_extrapolate,
    detect_transitions,
    energy_identity_residual,
    energy_profile,
    monitor_locality_envelope,
)
from .errors import CascadeLabError
from .gates import (
    GateParams,
    amplifier_closed_form,
    amplifier_terms,
    pump_closed_form,
    pump_terms,
    rotor_closed_form,
    rotor_terms,
)
from .geometry import FreqTriple, fourier_coefficients, nondegeneracy_scan
from .integrator import IntegratorConfig, Trajectory, integrate
from .models import (
    CascadeParams,
    DelayParams,
    DyadicParams,
    TransitionEvent,
    TruncatedParams,
    cascade_dropped_terms,
    cascade_run,
    delay_circuit_spec,
    delay_initial_state,
    dyadic_spec,
    truncated_blowup_run,
)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_time_series(path: Path, traj: Trajectory, spec: CircuitSpec) -> None:
    """CSV columns: t, amplitudes in mode order, E per scale, dissipation."""
    profile = energy_profile(traj, spec)
    header = (
        ["t"]
        + [m.label for m in spec.modes]
        + [f"E_{n}" for n in profile.scales]
        + ["dissipation"]
    )
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(traj.n_samples):
            row = (
                [_fmt(traj.times[i])]
                + [_fmt(v) for v in traj.states[i]]
                + [_fmt(v) for v in profile.per_scale[i]]
                + [_fmt(traj.dissipation[i])]
            )
            fh.write(",".join(row) + "\n")


def write_events(path: Path, events: list[TransitionEvent]) -> None:
    with path.open("w", newline="\n") as fh:
        fh.write("scale,t,amplitude\n")
        for e in events:
            fh.write(f"{e.scale},{_fmt(e.t)},{_fmt(e.amplitude)}\n")


def read_events(path: Path) -> list[TransitionEvent]:
    events = []
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "scale,t,amplitude":
        raise CascadeLabError(f"{path}: not an events file")
    for line in lines[1:]:
        if not line.strip():
            continue
        scale, t, amp = line.split(",")
        events.append(TransitionEvent(int(scale), float(t), float(amp)))
    return events


@dataclass(frozen=True)
class RunManifest:
    kind: str
    status: str
    started: str
    finished: str
    files: Mapping[str, str]
    summary: Mapping[str, object]
    checks: Mapping[str, bool]
    error: str = ""

    @property
    def all_checks_pass(self) -> bool:
        return all(self.checks.values())


def _write_kv_file(path: Path, sections: Mapping[str, Mapping]) -> None:
    lines = []
    for name, body in sections.items():
        normalized = {}
        for key, value in body.items():
            if isinstance(value, (np.floating, np.integer)):
                value = value.item()
            normalized[key] = value
        lines += _emit_section(name, normalized)
    path.write_text("\n".join(lines))


def run(config: RunConfig, out_dir: Path, quiet: bool = False) -> RunManifest:
    """Execute one experiment, emitting artifacts into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    handler = _HANDLERS[config.kind]
    status, error = "ok", ""
    summary: dict = {}
    checks: dict = {}
    try:
        summary, checks = handler(config, out_dir)
    except CascadeLabError as exc:
        status, error = "failed", f"{type(exc).__name__}: {exc}"
    finished = datetime.now(timezone.utc).isoformat()
    summary["elapsed_seconds"] = round(time.perf_counter() - t0, 3)
    (out_dir / "config.resolved.toml").write_text(serialize_config(config))
    _write_kv_file(out_dir / "summary.toml", {"summary": summary, "checks": checks})
    files = {
        p.name: _sha256(p)
        for p in sorted(out_dir.iterdir())
        if p.is_file() and p.name != "manifest.toml"
    }
    manifest = RunManifest(
        kind=config.kind, status=status, started=started, finished=finished,
        files=files, summary=summary, checks=checks, error=error,
    )
    _write_kv_file(
        out_dir / "manifest.toml",
        {
            "manifest": {
                "version": __version__, "kind": manifest.kind,
                "status": manifest.status, "started": started,
                "finished": finished, "error": error,
            },
            "files": files,
            "summary": summary,
            "checks": checks,
        },
    )
    if not quiet:
        state = "ok" if status == "ok" else f"FAILED ({error})"
        print(f"[{config.kind}] {state} -> {out_dir}")
    return manifest


def _seeded_overrides(config: RunConfig, spec: CircuitSpec) -> dict[str, float]:
    return {m.label: config.atol_seeded for m in amplifier_seeded_modes(spec)}


def _cfg_for(config: RunConfig, spec: CircuitSpec) -> IntegratorConfig:
    overrides = dict(config.integrator.atol_overrides)
    overrides.update(_seeded_overrides(config, spec))
    return replace(config.integrator, atol_overrides=overrides)


def _run_gate_oracle(config: RunConfig, out_dir: Path):
    m = config.model
    alpha, A, t_end = m["alpha"], m["amplitude"], m["t_end"]
    p = GateParams(alpha)
    x, y, z = (Mode(s, i + 1) for i, s in enumerate("xyz"))
    cases = {
        "pump": (
            CircuitSpec((x, y), tuple(pump_terms(x, y, p))),
            np.array([A, 0.0]),
            lambda t: pump_closed_form(A, alpha, t),
        ),
        "amplifier": (
            CircuitSpec((x, y), tuple(amplifier_terms(x, y, p))),
            np.array(amplifier_closed_form(A, alpha, t_end, 0.0)),
            lambda t: amplifier_closed_form(A, alpha, t_end, t),
        ),
        "rotor": (
            CircuitSpec((x, y, z), tuple(rotor_terms(x, y, z, p))),
            np.array([A, 0.0, A]),
            lambda t: rotor_closed_form(A, 0.0, A, alpha, t),
        ),
    }
    summary, checks = {}, {}
    for name, (spec, x0, exact) in cases.items():
        traj = integrate(spec, StateVector(0.0, x0), t_end, config.integrator)
        dev = 0.0
        for i in range(traj.n_samples):
            ref = np.array(exact(traj.times[i]))
            dev = max(dev, float(np.abs(traj.states[i] - ref).max()) / A)
        write_time_series(out_dir / f"{name}.csv", traj, spec)
        summary[f"{name}_max_deviation"] = dev
        checks[f"{name}_matches_closed_form"] = dev <= 1e-8
    return summary, checks


def _run_dyadic(config: RunConfig, out_dir: Path):
    m = config.model
    p = DyadicParams(m["lam"], m["alpha_diss"], m["n_lo"], m["n_hi"])
    spec = dyadic_spec(p, viscous=m["viscous"])
    x0 = np.zeros(len(spec.modes))
    init = m["init_scale"] if m["init_scale"] is not None else p.n_lo
    x0[spec.index[spec.mode(f"u{init}")]] = 1.0
    traj = integrate(spec, StateVector(0.0, x0), m["t_end"], _cfg_for(config, spec))
    write_time_series(out_dir / "series.csv", traj, spec)
    residual = energy_identity_residual(traj)
    summary = {
        "energy_identity_residual": residual,
        "dissipation_integral": traj.dissipation_integral,
        "steps_accepted": traj.accepted,
    }
    tol = 1e-6 if m["viscous"] else 1e-9
    checks = {"energy_identity": residual <= tol}
    return summary, checks


def _run_truncated(config: RunConfig, out_dir: Path):
    m = config.model
    p = TruncatedParams(
        m["lam"], m["alpha_diss"], m["delta"], m["delta_prime"], m["n0"], m["k_max"]
    )
    run_ = truncated_blowup_run(p, config.integrator)
    write_time_series(out_dir / "series.csv", run_.trajectory, run_.spec)
    write_events(out_dir / "events.csv", list(run_.checkpoints))
    gaps = run_.gaps
    bound_ok = all(
        g <= 2.0 * math.atanh(p.lam ** -p.delta) * p.lam ** (-p.n0 - k + p.delta * k)
        for k, g in enumerate(gaps)
    )
    summary = {
        "checkpoints": len(run_.checkpoints),
        "T_star": run_.T_star_estimate,
        "gap_ratio": run_.gap_ratio,
        "fit_residual": run_.fit_residual,
        "energy_identity_residual": energy_identity_residual(run_.trajectory),
    }
    checks = {
        "gap_bounds": bound_ok,
        "finite_T_star": math.isfinite(run_.T_star_estimate),
    }
    return summary, checks


def _run_delay(config: RunConfig, out_dir: Path):
    m = config.model
    p = DelayParams(m["K"], m["eps"], m["gamma"])
    spec = delay_circuit_spec(p)
    traj = integrate(spec, delay_initial_state(), m["t_end"], _cfg_for(config, spec))
    write_time_series(out_dir / "series.csv", traj, spec)
    t, X = traj.times, traj.states
    c = X[:, spec.index[spec.mode("c")]]
    a_next = X[:, spec.index[spec.mode("a_next")]]
    ignition = c >= p.eps ** 2
    summary: dict = {"output_final": float(a_next[-1])}
    checks: dict = {"ignited": bool(ignition.any())}
    if ignition.any():
        t_c = float(t[np.argmax(ignition)])
        summary["t_ignition"] = t_c
        summary["ignition_vs_sqrt2"] = abs(t_c - math.sqrt(2.0))
        pre = t <= t_c - 1.0 / math.sqrt(p.K)
        if pre.any():
            a = X[:, spec.index[spec.mode("a")]]
            others = np.abs(X[pre][:, 1:]).max()
            summary["pre_transition_a_deviation"] = float(np.abs(a[pre] - 1.0).max())
            summary["pre_transition_others_max"] = float(others)
    if (a_next >= 0.9).any() and (a_next >= 0.1).any():
        width = float(t[np.argmax(a_next >= 0.9)] - t[np.argmax(a_next >= 0.1)])
        summary["transfer_width"] = width
    return summary, checks


def _run_cascade(config: RunConfig, out_dir: Path):
    m = config.model
    p = CascadeParams(
        eps0=m["eps0"], eps=m["eps"], K=m["K"], gamma=m["gamma"], n0=m["n0"],
        window=(m["n0"], m["n0"] + m["window_scales"] - 1), viscous=m["viscous"],
    )
    overrides = {
        f"c{n}": config.atol_seeded
        for n in range(p.n0, p.window[1] + m["max_extra_scales"] + 1)
    }
    cfg = replace(config.integrator, atol_overrides=overrides)
    run_ = cascade_run(
        p, cfg, t_end=m["t_end"], threshold=m["threshold"],
        max_extra_scales=m["max_extra_scales"],
    )
    write_time_series(out_dir / "series.csv", run_.trajectory, run_.spec)
    events = detect_transitions(run_.trajectory, run_.spec)
    write_events(out_dir / "events.csv", events)
    _write_energy_report(out_dir / "energy_report.csv", run_, events)
    _write_transition_states(out_dir / "transition_states.csv", p, run_, events)
    summary = {
        "events": len(events),
        "window_truncated": run_.truncated,
        "energy_identity_residual": energy_identity_residual(run_.trajectory),
        "dropped_boundary_terms": len(cascade_dropped_terms(p)),
    }
    checks = {"chained_transitions": len(events) >= 4}
    if len(events) >= 4:
        fit = blowup_extrapolate(events)
        summary["T_star"] = fit.T_star
        summary["gap_ratio"] = fit.ratio
        summary["fit_residual"] = fit.fit_residual
        checks["finite_T_star"] = fit.blowup_detected
    if len(events) >= 2:
        # desk-regime envelope constants; recorded, not release-gating
        constants = BoundConstants(
            c_before=0.25, rho_before=(1.0 + p.eps0) ** 0.1,
            c_after=1e-3, rho_after=(1.0 + p.eps0) ** 10,
        )
        reports = monitor_locality_envelope(
            run_.trajectory, events, constants, run_.spec
        )
        summary["envelope_constants"] = (
            f"C1={constants.c_before} rho1={constants.rho_before:.6g} "
            f"C2={constants.c_after} rho2={constants.rho_after:.6g}"
        )
        for rep in reports:
            summary[f"envelope_{rep.bound_id.replace('-', '_')}_ratio"] = rep.max_ratio
    return summary, checks


def _write_transition_states(path: Path, p, run_, events) -> None:
    """Measured previous-scale state at each checkpoint, values only.

    The slow-pump and amplified modes one scale down keep the old rotor
    spinning through a handover; their natural units are eps*e and
    eps^2*e.  The asymptotic-regime constants for these are not desk
    measurable, so the ratios are recorded without a pass/fail verdict.
    """
    spec = run_.spec
    idx = {(m.component, m.scale): j for j, m in enumerate(spec.modes)}
    traj = run_.trajectory
    with path.open("w", newline="\n") as fh:
        fh.write("scale,t,amplitude,b_prev_over_eps_e,c_prev_over_eps2_e\n")
        for ev in events:
            b_col = idx.get((2, ev.scale - 1))
            c_col = idx.get((3, ev.scale - 1))
            if b_col is None or c_col is None:
                continue
            i = int(np.searchsorted(traj.times, ev.t))
            b_ratio = traj.states[i, b_col] / (p.eps * ev.amplitude)
            c_ratio = traj.states[i, c_col] / (p.eps ** 2 * ev.amplitude)
            fh.write(
                f"{ev.scale},{_fmt(ev.t)},{_fmt(ev.amplitude)},"
                f"{_fmt(b_ratio)},{_fmt(c_ratio)}\n"
            )


def _write_energy_report(path: Path, run_, events) -> None:
    """Per-interval maxima of the energies at scales around the active one."""
    profile = energy_profile(run_.trajectory, run_.spec)
    with path.open("w", newline="\n") as fh:
        fh.write("scale,t_start,t_end,"
                 "E_minus2_max,E_minus1_max,E_max,E_plus1_max,E_plus2_max\n")
        for prev, ev in zip(events, events[1:]):
            if ev.scale != prev.scale + 1:
                continue
            inside = (profile.times >= prev.t) & (profile.times <= ev.t)
            row = [str(ev.scale), _fmt(prev.t), _fmt(ev.t)]
            for offset in (-2, -1, 0, 1, 2):
                scale = ev.scale + offset
                if scale in profile.scales:
                    row.append(_fmt(float(profile.at_scale(scale)[inside].max())))
                else:
                    row.append(_fmt(0.0))
            fh.write(",".join(row) + "\n")


def _run_trilinear(config: RunConfig, out_dir: Path):
    m = config.model
    base = FreqTriple.base()
    coeffs = fourier_coefficients(base, m["grid_size"])
    scan = nondegeneracy_scan(
        base, m["radius"], m["samples"], seed=config.seed, grid_size=max(8, min(m["grid_size"], 16)),
    )
    with (out_dir / "coefficients.csv").open("w", newline="\n") as fh:
        fh.write("s1,s2,s3,re,im,abs\n")
        for sigma, c in sorted(coeffs.items()):
            fh.write(
                f"{sigma[0]},{sigma[1]},{sigma[2]},{_fmt(c.real)},{_fmt(c.imag)},{_fmt(abs(c))}\n"
            )
    summary = {
        "base_min_abs_c": min(abs(c) for c in coeffs.values()),
        "scan_min_abs_c": scan.min_abs_c,
        "scan_samples": scan.samples,
        "scan_radius": m["radius"],
    }
    checks = {"nondegenerate": scan.min_abs_c >= 0.05}
    return summary, checks


_HANDLERS = {
    "gate-oracle": _run_gate_oracle,
    "dyadic": _run_dyadic,
    "truncated": _run_truncated,
    "delay": _run_delay,
    "cascade": _run_cascade,
    "trilinear": _run_trilinear,
}


def run_sweep(
    base: RunConfig, grids: Mapping[str, list], out_dir: Path,
    jobs: int | None = None, quiet: bool = False,
) -> list[tuple[str, RunManifest]]:
    """Run every grid combination concurrently, one directory per run."""
    from concurrent.futures import ProcessPoolExecutor
    from .config import iter_sweep_configs
    import os

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for i, (label, cfg) in enumerate(iter_sweep_configs(base, grids)):
        slug = label.replace("=", "-").replace(",", "_").replace(".", "p")
        tasks.append((label, cfg, out_dir / f"run-{i:03d}-{slug}"))
    workers = jobs or min(len(tasks), os.cpu_count() or 1)
    results: list[tuple[str, RunManifest]] = []
    if workers <= 1:
        for label, cfg, d in tasks:
            results.append((label, run(cfg, d, quiet=quiet)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (label, pool.submit(run, cfg, d, True)) for label, cfg, d in tasks
            ]
            for label, fut in futures:
                results.append((label, fut.result()))
        if not quiet:
            for label, manifest in results:
                print(f"[sweep {label}] {manifest.status}")
    _write_kv_file(
        out_dir / "sweep-manifest.toml",
        {
            "sweep": {
                "runs": len(results),
                "all_ok": all(m.status == "ok" for _, m in results),
            },
            "labels": {f"run_{i:03d}": label for i, (label, _) in enumerate(results)},
        },
    )
    return results


def verify_cancellation_report(spec: CircuitSpec, samples: int, seed: int) -> dict:
    """Structural plus randomized numeric audit, as one summary dict."""
    structural = check_cancellation_structural(spec)
    numeric = check_cancellation_numeric(spec, samples, seed)
    return {
        "structural_pass": structural.passed,
        "max_residual": structural.max_residual,
        "violating_triples": len(structural.violating_triples),
        "numeric_max": numeric,
        "numeric_pass": numeric <= 1e-12,
    }
