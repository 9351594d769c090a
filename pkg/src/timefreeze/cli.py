"""Command-line entry point: run scenario configs, write CSVs and reports.

    timefreeze run <config.json> [...] [--out DIR] [--jobs N] [--seed-free]

Exit codes: 0 success, 2 config error, 3 invalid geometry, 4 solver or
simulation failure (the report is still written when one can be assembled),
5 unexpected internal error.  With several configs the worst code wins.
Set TIMEFREEZE_LOG=debug for solver chatter on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as tfio
from .io import ConfigError, GeometryError, KMH_TO_MS
from .sim import SimulationError, simulate_pump, simulate_ski
from .core import TimefreezeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_SOLVER = 4
EXIT_INTERNAL = 5

_CATEGORY = {
    EXIT_CONFIG: "config-error",
    EXIT_GEOMETRY: "geometry-error",
    EXIT_SOLVER: "solver-error",
    EXIT_INTERNAL: "internal-error",
}


def _verbose() -> bool:
    return os.environ.get("TIMEFREEZE_LOG", "").lower() in ("debug", "verbose", "1")


def _fail(code: int, msg: str) -> int:
    print(f"timefreeze: {_CATEGORY[code]}: {msg}", file=sys.stderr)
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _out_path(out_dir: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else out_dir / p


def run_one(config_path: str, out_dir: str | None, seed_free: bool) -> int:
    """Run a single scenario config; returns the process exit code."""
    cpath = Path(config_path)
    out = Path(out_dir) if out_dir else Path.cwd()
    try:
        cfg = tfio.load_config(cpath)
        resolved = tfio.resolve_config(cfg, name=cpath.stem)
        if seed_free and resolved["kind"] == "pump-ocp":
            resolved["solver"]["seed_free"] = True
        params = tfio.params_from_config(resolved)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except GeometryError as exc:
        return _fail(EXIT_GEOMETRY, str(exc))

    out.mkdir(parents=True, exist_ok=True)
    csv_path = _out_path(out, resolved["output"]["csv"])
    report_path = _out_path(out, resolved["output"]["report"])
    kind = resolved["kind"]
    opts = tfio.integrator_from_config(resolved)
    tau_final = float(resolved["integrator"]["tau_final"])

    try:
        if kind == "ski-sim":
            report, summary = _run_ski(resolved, params, opts, tau_final, csv_path)
        elif kind == "pump-sim":
            report, summary = _run_pump_sim(resolved, params, opts, tau_final, csv_path)
        else:
            report, summary = _run_pump_ocp(resolved, params, opts, tau_final, csv_path)
    except (SimulationError, TimefreezeError) as exc:
        tfio.write_json(
            report_path,
            _jsonable(
                {
                    "schema": 1,
                    "kind": kind,
                    "resolved_config": resolved,
                    "error": str(exc),
                }
            ),
        )
        return _fail(EXIT_SOLVER, f"{cpath.name}: {exc} (report at {report_path})")

    tfio.write_json(report_path, _jsonable(report))
    print(summary)
    code = EXIT_OK
    if kind == "pump-ocp" and not report["converged"]:
        code = _fail(EXIT_SOLVER, f"{cpath.name}: homotopy did not converge")
    return code


def _run_ski(resolved, params, opts, tau_final, csv_path):
    res = simulate_ski(
        params, float(resolved["initial"]["start_height"]), tau_final, options=opts
    )
    tfio.write_trajectory_csv(csv_path, res.trajectory)
    report = {
        "schema": 1,
        "kind": "ski-sim",
        "resolved_config": resolved,
        "landing_point": list(res.landing_point),
        "jump_distance": res.jump_distance,
        "takeoff_speed": res.takeoff_speed,
        "flight_time": res.flight_time,
        "events": tfio.events_as_records(res.trajectory),
        "residuals": {
            "max_aux_clock_drift": tfio.max_aux_clock_drift(res.trajectory),
        },
        "csv": str(csv_path.name),
    }
    summary = (
        f"ski-sim h0={resolved['initial']['start_height']:g} m: landed at "
        f"x={res.landing_point[0]:.3f} y={res.landing_point[1]:.3f} "
        f"after {res.flight_time:.3f} s of flight"
    )
    return report, summary


def _pump_event_counts(traj) -> dict:
    kinds = traj.event_kinds()
    return {
        "impacts": kinds.count("impact-entry"),
        "detaches": kinds.count("detach"),
        "slides": kinds.count("slide-start"),
    }


def _run_pump_sim(resolved, params, opts, tau_final, csv_path):
    v0 = float(resolved["initial"]["v0_kmh"]) * KMH_TO_MS
    res = simulate_pump(
        params,
        v0,
        q3_0=float(resolved["initial"]["q3_0"]),
        tau_final=tau_final,
        options=opts,
    )
    tfio.write_trajectory_csv(csv_path, res.trajectory)
    traj = res.trajectory
    report = {
        "schema": 1,
        "kind": "pump-sim",
        "resolved_config": resolved,
        "reached_goal": res.reached_goal,
        "t_goal": res.t_goal,
        "final_q1": res.final_q1,
        "terminal_v1": float(traj.v[-1, 0]),
        "event_counts": _pump_event_counts(traj),
        "events": tfio.events_as_records(traj),
        "residuals": {
            "max_aux_clock_drift": tfio.max_aux_clock_drift(traj),
        },
        "csv": str(csv_path.name),
    }
    if res.reached_goal:
        summary = (
            f"pump-sim v0={resolved['initial']['v0_kmh']:g} km/h: reached the "
            f"goal at t={res.t_goal:.3f} s"
        )
    else:
        summary = (
            f"pump-sim v0={resolved['initial']['v0_kmh']:g} km/h: stalled at "
            f"q1={res.final_q1:.3f} m (goal {params.q_goal:g} m)"
        )
    return report, summary


def _run_pump_ocp(resolved, params, opts, tau_final, csv_path):
    from .ocp import solve_pump_ocp

    sc = resolved["solver"]
    v0 = float(resolved["initial"]["v0_kmh"]) * KMH_TO_MS
    q3_0 = float(resolved["initial"]["q3_0"])
    sol = solve_pump_ocp(
        params,
        v0,
        n_controls=int(sc["n_controls"]),
        per_control=int(sc["per_control"]),
        q3_0=q3_0,
        seed_free=bool(sc["seed_free"]),
        sigmas=tfio.sigma_schedule(sc),
        tol=float(sc["tol"]),
        max_iter=int(sc["max_iter"]),
        verbose=_verbose(),
    )
    # the exported trajectory is the optimal control replayed through the
    # event-driven simulator, not the collocation nodes
    replay = sol.replay(tau_final=tau_final)
    tfio.write_trajectory_csv(csv_path, replay.trajectory)
    uncontrolled = simulate_pump(params, v0, q3_0=q3_0, tau_final=tau_final, options=opts)

    terminal_node = sol.node_states()[-1]
    comp = sol.complementarity
    delta_v1 = None
    if uncontrolled.reached_goal and replay.reached_goal:
        delta_v1 = float(replay.trajectory.v[-1, 0] - uncontrolled.trajectory.v[-1, 0])
    report = {
        "schema": 1,
        "kind": "pump-ocp",
        "resolved_config": resolved,
        "converged": sol.converged,
        "seeded_from": sol.seeded_from,
        "t_f_optimal": sol.terminal_time,
        "t_f_uncontrolled": uncontrolled.t_goal,
        "delta_v1_terminal": delta_v1,
        "event_counts_optimal": _pump_event_counts(replay.trajectory),
        "event_counts_uncontrolled": _pump_event_counts(uncontrolled.trajectory),
        "residuals": {
            "complementarity": comp,
            "complementarity_ok": bool(comp <= 1e-6),
            "eq_infnorm": sol.eq_residual,
            "bound_violation": sol.bound_violation,
            "terminal_position": float(abs(terminal_node[0] - params.q_goal)),
            "replay_relative_gap": sol.replay_gap(),
        },
        "stages": [
            {
                "sigma": s.sigma,
                "status": s.status,
                "accepted": s.accepted,
                "iterations": s.iterations,
                "kkt_error": s.kkt_error,
                "constraint_violation": s.constraint_violation,
            }
            for s in sol.stages
        ],
        "control_schedule": sol.control_schedule(),
        "events": tfio.events_as_records(replay.trajectory),
        "csv": str(csv_path.name),
    }
    unc = "did not reach the goal" if uncontrolled.t_goal is None else (
        f"uncontrolled {uncontrolled.t_goal:.3f} s"
    )
    summary = (
        f"pump-ocp v0={resolved['initial']['v0_kmh']:g} km/h: t_f="
        f"{sol.terminal_time:.3f} s ({unc}), converged={sol.converged}"
    )
    return report, summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="timefreeze",
        description="Simulate and optimize impact systems on a frozen clock.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run scenario config file(s)")
    run_p.add_argument("configs", nargs="+", help="JSON scenario config path(s)")
    run_p.add_argument("--out", default=None, help="output directory (default: cwd)")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel config runs")
    run_p.add_argument(
        "--seed-free",
        action="store_true",
        help="ignore the simulation-based initial guess in OCP solves",
    )
    args = parser.parse_args(argv)

    try:
        if args.jobs > 1 and len(args.configs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                codes = list(
                    pool.map(
                        run_one,
                        args.configs,
                        [args.out] * len(args.configs),
                        [args.seed_free] * len(args.configs),
                    )
                )
        else:
            codes = [run_one(c, args.out, args.seed_free) for c in args.configs]
    except Exception as exc:  # noqa: BLE001 - last-resort category for the shell
        traceback.print_exc()
        return _fail(EXIT_INTERNAL, str(exc))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
