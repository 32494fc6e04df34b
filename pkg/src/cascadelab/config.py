"""Run configuration: TOML parsing/serialization and circuit JSON I/O.

Configs are TOML with three sections: [run] (kind, seed, out_dir),
[model] (kind-specific parameters) and [integrator].  Unknown keys are
hard errors so typos cannot silently fall back to defaults.  Circuit
specifications themselves travel as JSON (see dump_circuit/load_circuit).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .circuit import CircuitSpec, InteractionTerm, Mode
from .errors import CascadeLabError, ConfigError
from .integrator import IntegratorConfig

KINDS = ("gate-oracle", "dyadic", "truncated", "delay", "cascade", "trilinear")

# kind -> {key: (type, default)}; REQUIRED marks keys without a default
_REQUIRED = object()
_MODEL_SCHEMA: dict[str, dict[str, tuple[type, Any]]] = {
    "gate-oracle": {
        "alpha": (float, 1.0),
        "amplitude": (float, 1.0),
        "t_end": (float, 5.0),
    },
    "dyadic": {
        "lam": (float, _REQUIRED),
        "alpha_diss": (float, _REQUIRED),
        "n_lo": (int, _REQUIRED),
        "n_hi": (int, _REQUIRED),
        "viscous": (bool, True),
        "t_end": (float, 5.0),
        "init_scale": (int, None),
    },
    "truncated": {
        "lam": (float, _REQUIRED),
        "alpha_diss": (float, _REQUIRED),
        "delta": (float, _REQUIRED),
        "delta_prime": (float, _REQUIRED),
        "n0": (int, _REQUIRED),
        "k_max": (int, _REQUIRED),
    },
    "delay": {
        "K": (float, _REQUIRED),
        "eps": (float, _REQUIRED),
        "gamma": (float, None),
        "t_end": (float, 2.5),
    },
    "cascade": {
        "eps0": (float, _REQUIRED),
        "eps": (float, _REQUIRED),
        "K": (float, _REQUIRED),
        "gamma": (float, None),
        "n0": (int, _REQUIRED),
        "window_scales": (int, 4),
        "max_extra_scales": (int, 6),
        "viscous": (bool, False),
        "t_end": (float, None),
        "threshold": (float, 1e-12),
    },
    "trilinear": {
        "radius": (float, 1e-3),
        "samples": (int, 500),
        "grid_size": (int, 16),
    },
}

_INTEGRATOR_SCHEMA: dict[str, tuple[type, Any]] = {
    "rtol": (float, 1e-10),
    "atol": (float, 1e-14),
    "atol_seeded": (float, 1e-24),
    "h_init": (float, None),
    "h_min": (float, 0.0),
    "h_max": (float, None),
    "event_tol": (float, 1e-9),
    "sample_interval": (float, None),
    "max_steps": (int, 50_000_000),
    "safety": (float, 0.7),
}

_RUN_SCHEMA: dict[str, tuple[type, Any]] = {
    "kind": (str, _REQUIRED),
    "seed": (int, 0),
    "out_dir": (str, None),
}


@dataclass(frozen=True)
class RunConfig:
    """A fully validated experiment description."""

    kind: str
    seed: int
    out_dir: str | None
    model: Mapping[str, Any]
    integrator: IntegratorConfig
    atol_seeded: float = 1e-24

    def __post_init__(self):
        object.__setattr__(self, "model", dict(self.model))


def _coerce(section: str, key: str, value, want: type):
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}")
        return value
    if want is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key}: expected a boolean, got {value!r}")
        return value
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {key}: expected a string, got {value!r}")
        return value
    raise AssertionError(want)


def _apply_schema(section: str, data: Mapping, schema: Mapping) -> dict:
    unknown = set(data) - set(schema)
    if unknown:
        raise ConfigError(
            f"[{section}] unknown key(s): {', '.join(sorted(unknown))}"
        )
    out = {}
    for key, (want, default) in schema.items():
        if key in data:
            out[key] = _coerce(section, key, data[key], want)
        elif default is _REQUIRED:
            raise ConfigError(f"[{section}] missing required key {key!r}")
        else:
            out[key] = default
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML experiment config.

    Unknown keys and sections are rejected; model parameters are checked
    against the selected kind's schema and the model constructors'
    invariants before anything runs.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    known = {"run", "model", "integrator", "sweep"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    run = _apply_schema("run", raw.get("run", {}), _RUN_SCHEMA)
    if run["kind"] not in KINDS:
        raise ConfigError(
            f"[run] kind must be one of {', '.join(KINDS)}; got {run['kind']!r}"
        )
    model = _apply_schema("model", raw.get("model", {}), _MODEL_SCHEMA[run["kind"]])
    integ = _apply_schema("integrator", raw.get("integrator", {}), _INTEGRATOR_SCHEMA)
    atol_seeded = integ.pop("atol_seeded")
    if integ["h_max"] is None:
        integ["h_max"] = math.inf
    try:
        integrator = IntegratorConfig(**integ)
        cfg = RunConfig(
            kind=run["kind"],
            seed=run["seed"],
            out_dir=run["out_dir"],
            model=model,
            integrator=integrator,
            atol_seeded=atol_seeded,
        )
        validate_model(cfg)
    except (ValueError, CascadeLabError) as exc:
        raise ConfigError(f"config validation error: {exc}") from exc
    return cfg


def validate_model(cfg: RunConfig) -> None:
    """Instantiate the kind's parameter object so its invariants run."""
    from . import models

    m = cfg.model
    if cfg.kind == "gate-oracle":
        from .gates import GateParams

        GateParams(m["alpha"])
        if m["amplitude"] <= 0 or m["t_end"] <= 0:
            raise ConfigError("[model] amplitude and t_end must be positive")
    elif cfg.kind == "dyadic":
        p = models.DyadicParams(m["lam"], m["alpha_diss"], m["n_lo"], m["n_hi"])
        init = m["init_scale"]
        if init is not None and not p.n_lo <= init <= p.n_hi:
            raise ConfigError("[model] init_scale must lie inside the window")
    elif cfg.kind == "truncated":
        models.TruncatedParams(
            m["lam"], m["alpha_diss"], m["delta"], m["delta_prime"], m["n0"], m["k_max"]
        )
    elif cfg.kind == "delay":
        models.DelayParams(m["K"], m["eps"], m["gamma"])
    elif cfg.kind == "cascade":
        if m["window_scales"] < 2:
            raise ConfigError("[model] window_scales must be >= 2")
        models.CascadeParams(
            eps0=m["eps0"], eps=m["eps"], K=m["K"], gamma=m["gamma"], n0=m["n0"],
            window=(m["n0"], m["n0"] + m["window_scales"] - 1), viscous=m["viscous"],
        )
    elif cfg.kind == "trilinear":
        if m["radius"] < 0 or m["samples"] < 1 or m["grid_size"] < 4:
            raise ConfigError(
                "[model] radius must be >= 0, samples >= 1, grid_size >= 4"
            )


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            raise ConfigError("infinite values cannot be serialized; omit the key")
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise ConfigError(f"cannot serialize value {value!r}")


def _emit_section(name: str, items: Mapping[str, Any]) -> list[str]:
    lines = [f"[{name}]"]
    for key, value in items.items():
        if value is None:
            continue
        lines.append(f"{key} = {_toml_value(value)}")
    lines.append("")
    return lines


def serialize_config(cfg: RunConfig) -> str:
    """Canonical TOML text; parse_config(serialize_config(cfg)) == cfg."""
    integ = {
        "rtol": cfg.integrator.rtol,
        "atol": cfg.integrator.atol,
        "atol_seeded": cfg.atol_seeded,
        "h_init": cfg.integrator.h_init,
        "h_min": cfg.integrator.h_min,
        "h_max": None if math.isinf(cfg.integrator.h_max) else cfg.integrator.h_max,
        "event_tol": cfg.integrator.event_tol,
        "sample_interval": cfg.integrator.sample_interval,
        "max_steps": cfg.integrator.max_steps,
        "safety": cfg.integrator.safety,
    }
    lines = []
    lines += _emit_section(
        "run", {"kind": cfg.kind, "seed": cfg.seed, "out_dir": cfg.out_dir}
    )
    lines += _emit_section("model", cfg.model)
    lines += _emit_section("integrator", integ)
    return "\n".join(lines)


def parse_sweep(text: str) -> tuple[RunConfig, dict[str, list]]:
    """Parse a config carrying a [sweep] section of parameter grids.

    Sweep keys are dotted paths like "model.gamma" mapping to value lists;
    the base config (with the sweep section removed) must itself validate,
    as must every grid combination.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    sweep = raw.get("sweep")
    if not sweep:
        raise ConfigError("sweep requires a [sweep] section with value lists")
    grids: dict[str, list] = {}
    for key, values in sweep.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"[sweep] {key}: expected a nonempty list")
        section, _, field_name = key.partition(".")
        if section not in ("model", "integrator", "run") or not field_name:
            raise ConfigError(
                f"[sweep] {key}: keys must look like 'model.<name>', "
                f"'integrator.<name>' or 'run.<name>'"
            )
        grids[key] = values
    base_raw = dict(raw)
    del base_raw["sweep"]
    base = parse_config(_dumps_raw(base_raw))
    for combo in iter_sweep_configs(base, grids):
        pass  # validation happens in construction
    return base, grids


def _dumps_raw(raw: Mapping[str, Mapping[str, Any]]) -> str:
    lines = []
    for name, section in raw.items():
        lines += _emit_section(name, section)
    return "\n".join(lines)


def iter_sweep_configs(base: RunConfig, grids: Mapping[str, list]):
    """Yield (label, RunConfig) for the cartesian product of the grids."""
    from itertools import product as cartesian

    keys = sorted(grids)
    for values in cartesian(*(grids[k] for k in keys)):
        overrides = dict(zip(keys, values))
        raw = {
            "run": {"kind": base.kind, "seed": base.seed, "out_dir": base.out_dir},
            "model": dict(base.model),
            "integrator": {
                "rtol": base.integrator.rtol,
                "atol": base.integrator.atol,
                "atol_seeded": base.atol_seeded,
                "h_init": base.integrator.h_init,
                "h_min": base.integrator.h_min,
                "h_max": None
                if math.isinf(base.integrator.h_max)
                else base.integrator.h_max,
                "event_tol": base.integrator.event_tol,
                "sample_interval": base.integrator.sample_interval,
                "max_steps": base.integrator.max_steps,
                "safety": base.integrator.safety,
            },
        }
        for key, value in overrides.items():
            section, _, field_name = key.partition(".")
            raw[section][field_name] = value
        label = ",".join(f"{k.split('.', 1)[1]}={v}" for k, v in overrides.items())
        yield label, parse_config(_dumps_raw(raw))


# ---------------------------------------------------------------------------
# circuit JSON
# ---------------------------------------------------------------------------

def dump_circuit(spec: CircuitSpec) -> str:
    """JSON form of a circuit: modes, interaction terms, dissipation rates."""
    doc = {
        "modes": [
            {"label": m.label, "component": m.component, "scale": m.scale}
            for m in spec.modes
        ],
        "interactions": [
            {"out": t.out.label, "in1": t.in1.label, "in2": t.in2.label,
             "coeff": t.coeff}
            for t in spec.interactions
        ],
        "dissipation": {m.label: nu for m, nu in spec.dissipation.items() if nu != 0.0},
    }
    return json.dumps(doc, indent=2)


def load_circuit(text: str) -> CircuitSpec:
    """Parse the JSON circuit format; unknown fields are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"circuit parse error: {exc}") from exc
    unknown = set(doc) - {"modes", "interactions", "dissipation"}
    if unknown:
        raise ConfigError(f"circuit: unknown field(s) {', '.join(sorted(unknown))}")
    try:
        modes = {}
        order = []
        for entry in doc.get("modes", []):
            extra = set(entry) - {"label", "component", "scale"}
            if extra:
                raise ConfigError(f"mode entry: unknown field(s) {sorted(extra)}")
            m = Mode(str(entry["label"]), int(entry.get("component", 1)),
                     int(entry.get("scale", 0)))
            modes[m.label] = m
            order.append(m)
        terms = []
        for entry in doc.get("interactions", []):
            extra = set(entry) - {"out", "in1", "in2", "coeff"}
            if extra:
                raise ConfigError(f"interaction entry: unknown field(s) {sorted(extra)}")
            terms.append(
                InteractionTerm(
                    out=modes[entry["out"]], in1=modes[entry["in1"]],
                    in2=modes[entry["in2"]], coeff=float(entry["coeff"]),
                )
            )
        dissipation = {
            modes[label]: float(rate)
            for label, rate in doc.get("dissipation", {}).items()
        }
        return CircuitSpec(tuple(order), tuple(terms), dissipation)
    except KeyError as exc:
        raise ConfigError(f"circuit references unknown mode or field: {exc}") from exc
    except CascadeLabError as exc:
        raise ConfigError(f"circuit validation error: {exc}") from exc
