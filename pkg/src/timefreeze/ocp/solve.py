"""Homotopy driver for the pump-track minimum-time problem.

The relaxed complementarity parameter sigma starts loose (the products may be
as large as 1) and tightens one decade per stage down to 1e-4.  A stage that
converges is *accepted*: its primal-dual point becomes the warm start for the
next stage.  A stage that blows its iteration budget is *rejected* and the
next stage restarts from the incumbent (the last accepted point, or the
initial guess).  Rejection matters in practice: with a near-feasible seed the
loosest relaxations admit wildly nonphysical blended solutions far from the
seed, and chasing them just poisons the warm-start chain.  The homotopy
effectively enters at the first sigma tight enough to hold the iterate near
the physical manifold.

The ladder stops at 1e-4 on purpose.  Below that every relaxed product sits
against its sigma ceiling, so each further decade demands a simultaneous
factor-ten migration of the whole active set and the step size collapses;
driving sigma further buys nothing.  Instead the incumbent's contact pattern
is frozen into equality pins and the resulting smooth problem is solved to
full tolerance, which lands complementarity at exact zero rather than at
sigma.  A borderline stage point (an apex or touchdown grazing its switching
surface) can be guessed wrong from a sigma-blurred incumbent, so the polish
re-classifies from its own iterate and retries until a round closes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..models import PumpParams, pump_initial_state
from ..nlp import IpmOptions, solve_nlp
from ..sim import PiecewiseConstantControl, simulate_pump
from .transcription import PumpTranscription

__all__ = ["HomotopyStage", "OcpSolution", "solve_pump_ocp"]

DEFAULT_SIGMAS = tuple(10.0 ** (-k) for k in range(4))  # 1 ... 1e-3


@dataclass
class HomotopyStage:
    sigma: float
    status: str
    iterations: int
    kkt_error: float
    constraint_violation: float
    wall_time: float
    accepted: bool = False


@dataclass
class OcpSolution:
    """Solution bundle; `control` replays through the simulator directly."""

    params: PumpParams
    v0: float
    terminal_time: float
    control: PiecewiseConstantControl
    z: np.ndarray
    transcription: PumpTranscription
    stages: list[HomotopyStage] = field(default_factory=list)
    seeded_from: str = "ramp"

    @property
    def converged(self) -> bool:
        return bool(self.stages) and self.stages[-1].accepted

    @property
    def complementarity(self) -> float:
        return self.transcription.complementarity_residual(self.z)

    @property
    def eq_residual(self) -> float:
        r = np.asarray(self.transcription.eq_con(self.z), dtype=float)
        return float(np.abs(r).max())

    @property
    def bound_violation(self) -> float:
        lb, ub = self.transcription.bounds()
        return float(
            max(np.max(lb - self.z, initial=0.0), np.max(self.z - ub, initial=0.0))
        )

    def node_states(self) -> np.ndarray:
        """End state of every integration interval, initial state first."""
        st = self.transcription.stage_states(self.z)
        return np.vstack([self.z[:7][None, :], st[:, 1, :]])

    def node_taus(self) -> np.ndarray:
        h = self.transcription.step_sizes(self.z)
        return np.concatenate([[0.0], np.cumsum(h)])

    def replay(self, tau_final: float = 60.0):
        """Run the optimized control through the event-driven simulator."""
        return simulate_pump(
            self.params,
            self.v0,
            control=self.control,
            q3_0=float(self.z[2]),
            tau_final=tau_final,
        )

    def replay_gap(self) -> float:
        """Relative difference between predicted and replayed arrival time."""
        run = self.replay()
        if not run.reached_goal or run.t_goal is None:
            return float("inf")
        return abs(run.t_goal - self.terminal_time) / max(self.terminal_time, 1e-9)

    def control_schedule(self, t_eps: float = 1e-9) -> list[dict]:
        """Per-interval control levels mapped onto physical time.

        An interval whose clock does not advance sits entirely inside an
        impact restoration; its level is flagged as physically instantaneous.
        """
        tr = self.transcription
        t_nodes = np.concatenate(
            [[float(self.z[6])], self.transcription.stage_states(self.z)[:, 1, 6]]
        )
        tau_nodes = self.node_taus()
        m = tr.per_control
        out = []
        for k in range(tr.n_controls):
            a, b = k * m, (k + 1) * m
            t0, t1 = float(t_nodes[a]), float(t_nodes[b])
            out.append(
                {
                    "u": float(self.control.values[k, 0]),
                    "tau_start": float(tau_nodes[a]),
                    "tau_end": float(tau_nodes[b]),
                    "t_start": t0,
                    "t_end": t1,
                    "instantaneous": bool(t1 - t0 <= t_eps),
                }
            )
        return out

    def diagnostics(self) -> dict:
        return {
            "terminal_time": self.terminal_time,
            "converged": self.converged,
            "complementarity": self.complementarity,
            "eq_residual": self.eq_residual,
            "bound_violation": self.bound_violation,
            "stage_statuses": [
                f"{s.status}{'' if s.accepted else ' (rejected)'}"
                for s in self.stages
            ],
            "total_iterations": sum(s.iterations for s in self.stages),
            "seeded_from": self.seeded_from,
        }


def _initial_point(
    tr: PumpTranscription, params: PumpParams, v0: float, q3_0: float, seed_free: bool
) -> tuple[np.ndarray, str]:
    if not seed_free:
        probe = simulate_pump(params, v0, q3_0=q3_0, tau_final=3.0 * tr.tau_total_guess)
        if probe.reached_goal:
            return tr.guess_from_simulation(probe.trajectory), "simulation"
        # a stalled run still feeds the grid: map it up to its deepest point
        # along the track and let the optimizer stretch it to the goal
        traj = probe.trajectory
        k_best = int(np.argmax(traj.states[:, 0]))
        if k_best > 0 and traj.states[k_best, 0] > 0.1 * params.q_goal:
            return (
                tr.guess_from_simulation(traj, tau_cut=float(traj.tau_grid[k_best])),
                "stalled-simulation",
            )
    return tr.ramp_guess(), "ramp"


def solve_pump_ocp(
    params: PumpParams,
    v0: float,
    n_controls: int = 30,
    per_control: int = 2,
    q3_0: float = 0.65,
    seed_free: bool = False,
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    tol: float = 1e-8,
    max_iter: int = 200,
    verbose: bool = False,
) -> OcpSolution:
    """Minimum-time pump run: transcribe, then walk sigma down with warm starts.

    seed_free skips the simulation-based initializer so the optimizer has to
    find the mode sequence on its own (slower, used to show the result does
    not depend on the seed).
    """
    x_init = pump_initial_state(params, v0, q3_0=q3_0).as_vector()
    # nominal horizon: constant-speed transit takes q_goal / v0
    tau_guess = params.q_goal / max(v0, 0.5)
    tr = PumpTranscription(
        params,
        x_init,
        n_controls=n_controls,
        per_control=per_control,
        tau_total_guess=tau_guess,
    )
    z_inc, seeded_from = _initial_point(tr, params, v0, q3_0, seed_free)

    stages: list[HomotopyStage] = []
    lam_inc = nu_inc = zl_inc = zu_inc = None
    warm = False
    final_sigma = sigmas[-1]
    for sigma in sigmas:
        problem = tr.build_problem(sigma)
        # a loose relaxation never needs a tight barrier: floor mu at a
        # fraction of sigma so the subproblem stops while its KKT system is
        # still well-conditioned; only the last stage runs the barrier down
        mu_min = None if sigma == final_sigma else max(tol / 10.0, 0.02 * sigma)
        # cold/restarted stages explore from the seed with a roomy barrier;
        # warm stages track a mildly deformed solution and start centered
        if warm:
            mu0 = max(mu_min or tol, min(1e-3, 0.1 * sigma))
        else:
            mu0 = max(mu_min or tol, min(1e-2, 10.0 * sigma))
        opts = IpmOptions(
            tol=tol,
            mu0=mu0,
            max_iter=max_iter,
            max_primal_step=10.0,
            delta_c_floor=1e-8,
            feas_restore=True,
            mu_min=mu_min,
            theta_cap=10.0,
            dual_rescue=True,
            delta_w_floor=1e-6,
            verbose=verbose,
        )
        t0 = time.perf_counter()
        res = solve_nlp(
            problem, z_inc, options=opts, lam_eq0=lam_inc, lam_ineq0=nu_inc,
            z_lower0=zl_inc, z_upper0=zu_inc,
        )
        accepted = res.status == "converged"
        stages.append(
            HomotopyStage(
                sigma=sigma,
                status=res.status,
                iterations=res.iterations,
                kkt_error=res.kkt_error,
                constraint_violation=res.constraint_violation,
                wall_time=time.perf_counter() - t0,
                accepted=accepted,
            )
        )
        if accepted:
            z_inc, lam_inc, nu_inc = res.x, res.lam_eq, res.lam_ineq
            zl_inc, zu_inc = res.z_lower, res.z_upper
            warm = True
        if verbose:
            tag = "accepted" if accepted else "rejected"
            print(
                f"[sigma={sigma:.0e}] {res.status} ({tag}) in {res.iterations} "
                f"it, kkt={res.kkt_error:.2e} theta={res.constraint_violation:.2e}"
            )

    # mode-locked polish: freeze the contact pattern the relaxation found and
    # solve the smooth problem, re-classifying between rounds because a stage
    # point grazing a switching surface can land on the wrong branch when the
    # pattern is read off a sigma-blurred incumbent
    z_cur = np.asarray(z_inc, dtype=float)
    lam_cur = lam_inc[: tr.n_eq] if lam_inc is not None else None
    for _ in range(4):
        pins = tr.mode_pattern(z_cur)
        pinned = tr.build_pinned_problem(pins)
        lam0 = None
        if lam_cur is not None:
            lam0 = np.concatenate([lam_cur, np.zeros(len(pins))])
        opts = IpmOptions(
            tol=min(tol, 1e-9),
            mu0=1e-4,
            max_iter=300,
            max_primal_step=10.0,
            delta_c_floor=1e-8,
            feas_restore=True,
            theta_cap=10.0,
            dual_rescue=True,
            delta_w_floor=1e-6,
            bound_push=1e-8,
            slack_crash_scale=1e-4,
            rescue_large_duals=True,
            verbose=verbose,
        )
        t0 = time.perf_counter()
        res = solve_nlp(pinned, tr.polish_start(z_cur), options=opts, lam_eq0=lam0)
        accepted = res.status == "converged"
        stages.append(
            HomotopyStage(
                sigma=0.0,
                status=res.status,
                iterations=res.iterations,
                kkt_error=res.kkt_error,
                constraint_violation=res.constraint_violation,
                wall_time=time.perf_counter() - t0,
                accepted=accepted,
            )
        )
        z_cur, lam_cur = res.x, res.lam_eq[: tr.n_eq]
        if verbose:
            tag = "accepted" if accepted else "re-classifying"
            print(
                f"[polish] {res.status} ({tag}) in {res.iterations} it, "
                f"kkt={res.kkt_error:.2e} theta={res.constraint_violation:.2e}"
            )
        if accepted:
            z_inc = res.x
            break

    z = np.asarray(z_inc, dtype=float)
    control = PiecewiseConstantControl(
        knots=tr.control_knots(z), values=tr.controls(z)
    )
    return OcpSolution(
        params=params,
        v0=v0,
        terminal_time=float(z[tr.i_terminal_clock]),
        control=control,
        z=z,
        transcription=tr,
        stages=stages,
        seeded_from=seeded_from,
    )
