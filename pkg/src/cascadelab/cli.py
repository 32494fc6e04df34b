"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance-check failure (only when --check is passed).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, parse_config, parse_sweep, load_circuit
from .errors import CascadeLabError
from .geometry import FreqTriple, fourier_coefficients, nondegeneracy_scan
from .models import bundled_systems
from .runner import run, run_sweep, verify_cancellation_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cascadelab",
        description="Quadratic-circuit cascade laboratory: simulate, audit, extrapolate.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one experiment from a config file")
    sim.add_argument("--config", required=True, type=Path)
    sim.add_argument("--out", type=Path, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--quiet", action="store_true")
    sim.add_argument("--check", action="store_true",
                     help="exit 4 unless all run checks pass")

    ver = sub.add_parser("verify-cancellation",
                         help="audit a circuit's energy-flux cancellation")
    src = ver.add_mutually_exclusive_group(required=True)
    src.add_argument("--circuit", type=Path, help="circuit JSON file")
    src.add_argument("--bundled", choices=sorted(bundled_systems()),
                     help="a bundled demonstration circuit")
    ver.add_argument("--samples", type=int, default=1000)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--quiet", action="store_true")
    ver.add_argument("--check", action="store_true")

    demo = sub.add_parser("gates-demo",
                          help="integrate each gate against its closed form")
    demo.add_argument("--quiet", action="store_true")
    demo.add_argument("--check", action="store_true")

    ext = sub.add_parser("extrapolate", help="re-fit T* from an events file")
    ext.add_argument("--events", required=True, type=Path)
    ext.add_argument("--quiet", action="store_true")
    ext.add_argument("--check", action="store_true")

    scan = sub.add_parser("scan-nondegeneracy",
                          help="sweep the trilinear Fourier coefficients")
    scan.add_argument("--radius", type=float, default=1e-3)
    scan.add_argument("--samples", type=int, default=500)
    scan.add_argument("--seed", type=int, default=0)
    scan.add_argument("--grid", type=int, default=8)
    scan.add_argument("--quiet", action="store_true")
    scan.add_argument("--check", action="store_true")

    sw = sub.add_parser("sweep", help="run a config grid concurrently")
    sw.add_argument("--config", required=True, type=Path)
    sw.add_argument("--out", type=Path, default=None)
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--jobs", type=int, default=None)
    sw.add_argument("--quiet", action="store_true")
    sw.add_argument("--check", action="store_true")

    return ap


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    if cfg.out_dir:
        return Path(cfg.out_dir)
    return Path("runs") / cfg.kind


def _cmd_simulate(args) -> int:
    cfg = parse_config(args.config.read_text())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    manifest = run(cfg, _out_dir(args, cfg), quiet=args.quiet)
    if manifest.status != "ok":
        return EXIT_NUMERICAL
    if args.check and not manifest.all_checks_pass:
        failed = [k for k, v in manifest.checks.items() if not v]
        print(f"checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _cmd_verify(args) -> int:
    if args.circuit is not None:
        spec = load_circuit(args.circuit.read_text())
    else:
        spec = bundled_systems()[args.bundled].spec
    report = verify_cancellation_report(spec, args.samples, args.seed)
    if not args.quiet:
        for key, value in report.items():
            print(f"{key} = {value}")
    if args.check and not (report["structural_pass"] and report["numeric_pass"]):
        return EXIT_CHECK
    return EXIT_OK


def _cmd_gates_demo(args) -> int:
    import numpy as np
    from .circuit import CircuitSpec, Mode, StateVector
    from .gates import (
        GateParams, amplifier_closed_form, amplifier_terms,
        pump_closed_form, pump_terms, rotor_closed_form, rotor_terms,
    )
    from .integrator import IntegratorConfig, integrate

    p = GateParams(1.0)
    x, y, z = (Mode(s, i + 1) for i, s in enumerate("xyz"))
    t_end = 5.0
    cases = {
        "pump": (CircuitSpec((x, y), tuple(pump_terms(x, y, p))),
                 [1.0, 0.0], lambda t: pump_closed_form(1.0, 1.0, t)),
        "amplifier": (CircuitSpec((x, y), tuple(amplifier_terms(x, y, p))),
                      list(amplifier_closed_form(1.0, 1.0, t_end, 0.0)),
                      lambda t: amplifier_closed_form(1.0, 1.0, t_end, t)),
        "rotor": (CircuitSpec((x, y, z), tuple(rotor_terms(x, y, z, p))),
                  [1.0, 0.0, 1.0], lambda t: rotor_closed_form(1.0, 0.0, 1.0, 1.0, t)),
    }
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-14, sample_interval=0.05)
    ok = True
    for name, (spec, x0, exact) in cases.items():
        traj = integrate(spec, StateVector(0.0, np.array(x0)), t_end, cfg)
        dev = max(
            float(np.abs(traj.states[i] - np.array(exact(traj.times[i]))).max())
            for i in range(traj.n_samples)
        )
        ok &= dev <= 1e-8
        if not args.quiet:
            print(f"{name}: max closed-form deviation = {dev:.3e}")
    return EXIT_OK if ok or not args.check else EXIT_CHECK


def _cmd_extrapolate(args) -> int:
    from .diagnostics import blowup_extrapolate
    from .runner import read_events

    events = read_events(args.events)
    result = blowup_extrapolate(events)
    if not args.quiet:
        print(f"T_star = {result.T_star!r}")
        print(f"ratio = {result.ratio!r}")
        print(f"fit_residual = {result.fit_residual!r}")
    if args.check and not result.blowup_detected:
        return EXIT_CHECK
    return EXIT_OK


def _cmd_scan(args) -> int:
    base = FreqTriple.base()
    coeffs = fourier_coefficients(base, max(args.grid, 8))
    result = nondegeneracy_scan(base, args.radius, args.samples, args.seed, args.grid)
    if not args.quiet:
        print(f"base_min_abs_c = {min(abs(c) for c in coeffs.values())!r}")
        print(f"scan_min_abs_c = {result.min_abs_c!r}")
        print(f"samples = {result.samples}, radius = {args.radius!r}")
    if args.check and result.min_abs_c < 0.05:
        return EXIT_CHECK
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base, grids = parse_sweep(args.config.read_text())
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    out = args.out if args.out is not None else Path(base.out_dir or "runs/sweep")
    results = run_sweep(base, grids, out, jobs=args.jobs, quiet=args.quiet)
    if any(m.status != "ok" for _, m in results):
        return EXIT_NUMERICAL
    if args.check and not all(m.all_checks_pass for _, m in results):
        return EXIT_CHECK
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify-cancellation": _cmd_verify,
    "gates-demo": _cmd_gates_demo,
    "extrapolate": _cmd_extrapolate,
    "scan-nondegeneracy": _cmd_scan,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CascadeLabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
