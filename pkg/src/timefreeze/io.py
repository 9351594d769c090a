"""Scenario configs and on-disk artifacts for the command line.

A scenario is one JSON document (schema version 1):

    {
      "schema": 1,
      "kind": "ski-sim" | "pump-sim" | "pump-ocp",
      "params":     { ... SkiParams / PumpParams fields, all optional ... },
      "initial":    { "start_height": 45.0 }            (ski)
                    { "v0_kmh": 15.0, "q3_0": 0.65 }    (pump)
      "integrator": { "tau_final", "rel_tol", "abs_tol", "event_tol",
                      "max_step" },
      "solver":     { "n_controls", "per_control", "tol", "max_iter",
                      "sigma0", "sigma_min", "shrink", "seed_free" }
                    (pump-ocp only),
      "output":     { "csv": "...", "report": "..." }
    }

Config speeds are km/h (converted by 1/3.6 internally and in the CSV);
heights and everything else are SI.  ``resolve_config`` fills every omitted
field with its default, so the resolved document embedded in a run report is
self-contained: re-running it reproduces the CSV byte for byte.

CSV schemas (exact headers):

    ski:  tau,t,q1,q2,v1,v2,theta1
    pump: tau,t,q1,q2,q3,v1,v2,v3,theta1,u

with floats printed to 17 significant digits.  Reports are JSON with sorted
keys and no timestamps, so identical runs serialize identically.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .core import TimefreezeError
from .models import (
    PumpParams,
    SkiParams,
    validate_pump_geometry,
    validate_ski_geometry,
)
from .sim import IntegratorOptions
from .trajectory import Trajectory

__all__ = [
    "ConfigError",
    "GeometryError",
    "KINDS",
    "SKI_CSV_HEADER",
    "PUMP_CSV_HEADER",
    "load_config",
    "resolve_config",
    "params_from_config",
    "integrator_from_config",
    "write_trajectory_csv",
    "write_json",
]

KINDS = ("ski-sim", "pump-sim", "pump-ocp")
SKI_CSV_HEADER = "tau,t,q1,q2,v1,v2,theta1"
PUMP_CSV_HEADER = "tau,t,q1,q2,q3,v1,v2,v3,theta1,u"

KMH_TO_MS = 1.0 / 3.6


class ConfigError(TimefreezeError):
    """The config file does not parse or does not validate."""


class GeometryError(TimefreezeError):
    """The configured model parameters fail the geometry checks."""


_INTEGRATOR_DEFAULTS = {
    "tau_final": 60.0,
    "rel_tol": 1e-8,
    "abs_tol": 1e-10,
    "event_tol": 1e-9,
    "max_step": 0.1,
}

_SOLVER_DEFAULTS = {
    "n_controls": 30,
    "per_control": 2,
    "tol": 1e-8,
    "max_iter": 300,
    "sigma0": 1.0,
    "sigma_min": 1e-7,
    "shrink": 0.1,
    "seed_free": False,
}


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown {section} key(s): {', '.join(unknown)} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def _merged(section: str, given, defaults: dict) -> dict:
    given = given or {}
    if not isinstance(given, dict):
        raise ConfigError(f"{section} must be an object")
    _check_keys(section, given, defaults)
    out = dict(defaults)
    out.update(given)
    return out


def resolve_config(cfg: dict, name: str = "run") -> dict:
    """Fill every omitted field with its default and validate the result."""
    _check_keys(
        "top-level",
        cfg,
        ("schema", "kind", "params", "initial", "integrator", "solver", "output"),
    )
    schema = cfg.get("schema", 1)
    if schema != 1:
        raise ConfigError(f"unsupported schema version {schema!r} (this build reads 1)")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")

    if kind == "ski-sim":
        param_cls, initial_defaults = SkiParams, {"start_height": 45.0}
    else:
        param_cls = PumpParams
        initial_defaults = {"v0_kmh": 15.0, "q3_0": 0.65}
    param_defaults = {
        f.name: f.default for f in dataclasses.fields(param_cls)
    }

    resolved = {
        "schema": 1,
        "kind": kind,
        "params": _merged("params", cfg.get("params"), param_defaults),
        "initial": _merged("initial", cfg.get("initial"), initial_defaults),
        "integrator": _merged(
            "integrator", cfg.get("integrator"), _INTEGRATOR_DEFAULTS
        ),
        "output": _merged(
            "output",
            cfg.get("output"),
            {"csv": f"{name}.csv", "report": f"{name}.report.json"},
        ),
    }
    if kind == "pump-ocp":
        resolved["solver"] = _merged("solver", cfg.get("solver"), _SOLVER_DEFAULTS)
    elif cfg.get("solver"):
        raise ConfigError(f"solver options are only meaningful for pump-ocp, not {kind}")

    for section in ("params", "initial", "integrator"):
        for key, val in resolved[section].items():
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{section}.{key} must be a number, got {val!r}")
            if not math.isfinite(float(val)):
                raise ConfigError(f"{section}.{key} must be finite")

    if kind == "ski-sim" and resolved["initial"]["start_height"] <= 0.0:
        raise ConfigError("initial.start_height must be positive")
    if kind != "ski-sim" and resolved["initial"]["v0_kmh"] < 0.0:
        raise ConfigError("initial.v0_kmh must be nonnegative")
    return resolved


def params_from_config(resolved: dict):
    cls = SkiParams if resolved["kind"] == "ski-sim" else PumpParams
    params = cls(**{k: float(v) for k, v in resolved["params"].items()})
    check = validate_ski_geometry if cls is SkiParams else validate_pump_geometry
    # probing a broken geometry may evaluate sqrt of a negative; the verdict
    # comes back as a message, not a warning
    with np.errstate(invalid="ignore"):
        problems = check(params)
    if problems:
        raise GeometryError("; ".join(problems))
    return params


def integrator_from_config(resolved: dict) -> IntegratorOptions:
    ic = resolved["integrator"]
    return IntegratorOptions(
        rel_tol=float(ic["rel_tol"]),
        abs_tol=float(ic["abs_tol"]),
        event_tol=float(ic["event_tol"]),
        max_step=float(ic["max_step"]),
    )


def sigma_schedule(solver_cfg: dict) -> tuple:
    """Relaxation ladder from sigma0 down to sigma_min by the shrink factor."""
    s0, s_min = float(solver_cfg["sigma0"]), float(solver_cfg["sigma_min"])
    shrink = float(solver_cfg["shrink"])
    if not (s0 > s_min > 0.0):
        raise ConfigError("need sigma0 > sigma_min > 0")
    if not (0.0 < shrink < 1.0):
        raise ConfigError("shrink must lie in (0, 1)")
    out = []
    s = s0
    while s > s_min * (1.0 + 1e-12):
        out.append(s)
        s *= shrink
    out.append(s_min)
    return tuple(out)


# -- trajectory export ---------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Samples over numerical time; the schema is picked by the model size."""
    path = Path(path)
    lines = []
    if traj.n_q == 2:
        lines.append(SKI_CSV_HEADER)
        for i in range(traj.n_samples):
            q, v = traj.q[i], traj.v[i]
            lines.append(
                ",".join(
                    _fmt(val)
                    for val in (
                        traj.tau_grid[i],
                        traj.t_clock[i],
                        q[0],
                        q[1],
                        v[0],
                        v[1],
                        traj.theta1[i],
                    )
                )
            )
    elif traj.n_q == 3:
        lines.append(PUMP_CSV_HEADER)
        u = traj.controls.reshape(traj.n_samples, -1)
        for i in range(traj.n_samples):
            q, v = traj.q[i], traj.v[i]
            lines.append(
                ",".join(
                    _fmt(val)
                    for val in (
                        traj.tau_grid[i],
                        traj.t_clock[i],
                        q[0],
                        q[1],
                        q[2],
                        v[0],
                        v[1],
                        v[2],
                        traj.theta1[i],
                        u[i, 0],
                    )
                )
            )
    else:
        raise ValueError(f"no CSV schema for n_q = {traj.n_q}")
    path.write_text("\n".join(lines) + "\n")


def events_as_records(traj: Trajectory) -> list[dict]:
    return [
        {
            "kind": e.kind,
            "tau": e.tau,
            "t": e.t_clock,
            "surface": e.surface,
            "c1": e.c_values[0],
            "c2": e.c_values[1],
        }
        for e in traj.events
    ]


def max_aux_clock_drift(traj: Trajectory) -> float:
    """Largest clock increment across any frozen sample interval."""
    th = traj.theta1[:-1]
    dt = np.diff(traj.t_clock)
    frozen = th <= 0.0
    if not np.any(frozen):
        return 0.0
    return float(np.abs(dt[frozen]).max())


def write_json(path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
