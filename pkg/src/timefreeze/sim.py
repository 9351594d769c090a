"""Event-driven integration of two-mode switching systems in numerical time.

The driver advances one of three segment types and watches for transitions:

* FREE   -- smooth dynamics f_free, clock running; watched for surface impacts.
* SLIDE  -- convex blend of f_free and f_aux that keeps the state on a
            surface; watched for loss of attraction (detach) and impacts on
            other surfaces.
* AUX    -- restoration field f_aux with positions and clock frozen; exits
            when the surface-normal rate returns to zero.

Smooth segments use an adaptive Dormand-Prince 5(4) pair with cubic Hermite
dense output.  Transitions are bracketed on the dense output and then polished
against exact sub-steps, so committed event states satisfy the switching
functions to ``event_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .core import (
    ExtendedState,
    FilippovSystem,
    SlidingModeError,
    TimefreezeError,
    check_vector_fields,
)
from .models.pump import PumpParams, build_pump_system, pump_initial_state
from .models.ski import LAND, SkiParams, build_ski_system, ski_initial_state
from .trajectory import Trajectory, TrajectoryEvent

__all__ = [
    "IntegratorOptions",
    "PiecewiseConstantControl",
    "StopCondition",
    "BracketingError",
    "SimulationError",
    "locate_event",
    "integrate",
    "simulate_ski",
    "simulate_pump",
    "SkiRunResult",
    "PumpRunResult",
]


class SimulationError(TimefreezeError):
    """The integration could not be carried out or completed."""


class BracketingError(SimulationError):
    """Event localization was requested on an interval that does not bracket a root."""


@dataclass
class IntegratorOptions:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    event_tol: float = 1e-9
    max_step: float = 0.1
    min_step: float = 1e-12
    max_events: int = 10000
    first_step: Optional[float] = None


@dataclass
class StopCondition:
    """When to end the run: a numerical-time horizon, plus optionally a
    terminal zero crossing of ``stop_fn`` or a terminal event kind."""

    tau_final: float
    stop_fn: Optional[Callable[[np.ndarray], float]] = None
    stop_event: Optional[str] = None
    stop_surface: Optional[int] = None


@dataclass
class PiecewiseConstantControl:
    """Right-continuous piecewise-constant control on a knot grid.

    ``values[k]`` applies on [knots[k], knots[k+1]); the first and last values
    extend to the left and right of the grid.  The knots live on the physical
    clock, not on numerical time: an actuator acts in physical time, and while
    the clock is frozen the control does not enter the dynamics at all, so the
    clock axis is the one on which two different integrations of the same run
    agree.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.knots.ndim != 1 or np.any(np.diff(self.knots) <= 0.0):
            raise ValueError("control knots must be strictly increasing")
        if self.values.shape[0] != self.knots.shape[0] - 1:
            raise ValueError(
                f"{self.values.shape[0]} control values for "
                f"{self.knots.shape[0]} knots (need one fewer)"
            )

    @property
    def n_u(self) -> int:
        return self.values.shape[1]

    def __call__(self, tau: float) -> np.ndarray:
        k = int(np.searchsorted(self.knots, tau, side="right")) - 1
        k = min(max(k, 0), self.values.shape[0] - 1)
        return self.values[k]

    def next_change(self, tau: float) -> float:
        """First knot strictly after tau (with a small slack), or +inf."""
        idx = int(np.searchsorted(self.knots, tau + 1e-12, side="right"))
        if idx >= self.knots.shape[0]:
            return math.inf
        return float(self.knots[idx])


# Dormand-Prince 5(4) tableau (FSAL: the seventh stage sits at the solution).
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_ERR_W = np.concatenate([_A[6], [0.0]]) - _B4


def _rk_step(f, x0, h, k1=None):
    """One Dormand-Prince step.  Returns (x5, err_vec, f(x5)).

    The seventh stage is evaluated at the fifth-order solution itself, so its
    derivative doubles as the first stage of the next step.
    """
    k = np.empty((7, x0.shape[0]))
    k[0] = k1 if k1 is not None else f(x0)
    x5 = x0
    for i in range(1, 7):
        x5 = x0 + h * (_A[i] @ k[:i])
        k[i] = f(x5)
    err = h * (_ERR_W @ k)
    return x5, err, k[6]


def _substep(f, x0, h, k1):
    """Single fifth-order step of length h from x0, no error control."""
    if h <= 0.0:
        return x0.copy()
    x5, _, _ = _rk_step(f, x0, h, k1=k1)
    return x5


def _error_norm(err, x0, x1, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.maximum(np.abs(x0), np.abs(x1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _hermite(tau0, x0, f0, tau1, x1, f1):
    h = tau1 - tau0

    def interp(tau):
        s = (tau - tau0) / h
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = s * s * (s - 1.0)
        return h00 * x0 + (h10 * h) * f0 + h01 * x1 + (h11 * h) * f1

    return interp


def locate_event(
    c_of_tau: Callable[[float], float],
    tau_lo: float,
    tau_hi: float,
    value_tol: float = 1e-9,
) -> float:
    """Root of a scalar function of numerical time on a bracketing interval.

    Raises BracketingError if the endpoints do not straddle zero or if the
    located point fails |c| <= value_tol.
    """
    g_lo = c_of_tau(tau_lo)
    g_hi = c_of_tau(tau_hi)
    if g_lo == 0.0:
        return float(tau_lo)
    if g_hi == 0.0:
        return float(tau_hi)
    if g_lo * g_hi > 0.0:
        raise BracketingError(
            f"no sign change on [{tau_lo}, {tau_hi}]: c = ({g_lo:.3e}, {g_hi:.3e})"
        )
    root = float(brentq(c_of_tau, tau_lo, tau_hi, xtol=1e-13, rtol=8.9e-16))
    if abs(c_of_tau(root)) > value_tol:
        raise BracketingError(
            f"located root at tau = {root} has |c| = {abs(c_of_tau(root)):.3e} > {value_tol}"
        )
    return root


_FALLING = -1
_RISING = +1
_ANY = 0


@dataclass
class _Monitor:
    name: str
    fn: Callable[[np.ndarray], float]
    direction: int
    surface: int = -1


def _crossed(g0, g1, direction, tol):
    if direction == _FALLING:
        return g0 > 0.0 and g1 < 0.0 and max(abs(g0), abs(g1)) > tol
    if direction == _RISING:
        return g0 < 0.0 and g1 > tol
    return g0 * g1 < 0.0 and abs(g0) > tol


class _Recorder:
    """Accumulates trajectory samples with segment-consistent derivatives."""

    def __init__(self, n_q, n_u):
        self.n_q, self.n_u = n_q, n_u
        self.taus: list[float] = []
        self.states: list[np.ndarray] = []
        self.theta: list[float] = []
        self.d_right: list[np.ndarray] = []
        self.d_left: list[np.ndarray] = []
        self.controls: list[np.ndarray] = []
        self.events: list[TrajectoryEvent] = []

    def push(self, tau, x, theta1, deriv, u, deriv_in=None):
        self.taus.append(float(tau))
        self.states.append(np.array(x, dtype=float))
        self.theta.append(float(min(max(theta1, 0.0), 1.0)))
        self.d_right.append(np.array(deriv, dtype=float))
        self.d_left.append(
            np.array(deriv_in if deriv_in is not None else deriv, dtype=float)
        )
        self.controls.append(np.array(u, dtype=float))

    def amend_right(self, theta1, deriv, u):
        """Rewrite the forward-looking fields of the last sample after a mode change."""
        self.theta[-1] = float(min(max(theta1, 0.0), 1.0))
        self.d_right[-1] = np.array(deriv, dtype=float)
        self.controls[-1] = np.array(u, dtype=float)

    def event(self, kind, tau, x, c_values, surface):
        self.events.append(
            TrajectoryEvent(
                tau=float(tau),
                t_clock=float(x[-1]),
                kind=kind,
                c_values=tuple(float(c) for c in c_values),
                surface=int(surface),
                sample_index=len(self.taus) - 1,
            )
        )

    def build(self) -> Trajectory:
        return Trajectory(
            n_q=self.n_q,
            tau_grid=np.array(self.taus),
            states=np.stack(self.states),
            theta1=np.array(self.theta),
            derivs=np.stack(self.d_right),
            derivs_end=np.stack(self.d_left),
            controls=np.stack(self.controls),
            events=self.events,
        )


_FREE, _SLIDE, _AUX = "free", "slide", "aux"


class _Driver:
    def __init__(self, system: FilippovSystem, x0, control, stop, opts):
        self.sys = system
        self.opts = opts
        self.stop = stop
        self.control = control
        self.x = np.asarray(x0, dtype=float).copy()
        self.tau = 0.0
        self.mode = _FREE
        self.surface = 0  # active surface while sliding or restoring
        self.rec = _Recorder(system.n_q, system.n_u)
        self.h_suggest = opts.first_step or min(opts.max_step, 1e-3)
        self.k1 = None  # FSAL cache, valid within the current segment
        self.finished = False
        self.n_events = 0

    # -- control -----------------------------------------------------------

    def u_now(self) -> np.ndarray:
        if self.control is None:
            return np.zeros(self.sys.n_u)
        # the clock rides in the last state slot
        return np.asarray(self.control(float(self.x[-1])), dtype=float)

    def next_knot(self) -> float:
        """Clock value of the next control switch."""
        if self.control is None:
            return math.inf
        return self.control.next_change(float(self.x[-1]))

    # -- per-surface scalar diagnostics --------------------------------------

    def gap(self, i, x):
        return float(self.sys.surfaces[i].c1(x))

    def gap_rate(self, i, x):
        return float(self.sys.surfaces[i].c2(x))

    def accel_pair(self, i, x, u):
        g2 = self.sys.surfaces[i].grad_c2(x)
        a_free = float(g2 @ self.sys.f_free(x, u))
        a_aux = float(g2 @ self.sys.f_aux(x))
        return a_free, a_aux

    # -- segment right-hand side and weight -----------------------------------

    def rhs(self, u):
        if self.mode == _FREE:
            return lambda x: self.sys.f_free(x, u)
        if self.mode == _AUX:
            return lambda x: self.sys.f_aux(x)
        i = self.surface

        def slide(x):
            ff = self.sys.f_free(x, u)
            fa = self.sys.f_aux(x)
            g2 = self.sys.surfaces[i].grad_c2(x)
            a_free = float(g2 @ ff)
            a_aux = float(g2 @ fa)
            denom = a_aux - a_free
            if a_aux <= 0.0 or abs(denom) < 1e-300:
                raise SlidingModeError(
                    "auxiliary field does not push back toward the surface",
                    reason="auxiliary",
                    a_free=a_free,
                    a_aux=a_aux,
                )
            # th may exceed 1 slightly on trial stages past a detach point;
            # the detach monitor cuts the accepted step before that matters.
            th = a_aux / denom
            return th * ff + (1.0 - th) * fa

        return slide

    def theta_of_mode(self, x, u) -> float:
        if self.mode == _FREE:
            return 1.0
        if self.mode == _AUX:
            return 0.0
        a_free, a_aux = self.accel_pair(self.surface, x, u)
        denom = a_aux - a_free
        return a_aux / denom if abs(denom) > 1e-300 else 1.0

    # -- monitors -------------------------------------------------------------

    def monitors(self, u) -> list[_Monitor]:
        mons: list[_Monitor] = []
        if self.mode == _AUX:
            i = self.surface
            mons.append(
                _Monitor("aux-exit", lambda x, i=i: self.gap_rate(i, x), _RISING, i)
            )
            return mons
        for i in range(len(self.sys.surfaces)):
            if self.mode == _SLIDE and i == self.surface:
                continue
            mons.append(_Monitor("impact", lambda x, i=i: self.gap(i, x), _FALLING, i))
        if self.mode == _SLIDE:
            i = self.surface
            mons.append(
                _Monitor(
                    "detach", lambda x, i=i: self.accel_pair(i, x, u)[0], _RISING, i
                )
            )
        for j, bp in enumerate(self.sys.breakpoints):
            mons.append(_Monitor("breakpoint", bp, _ANY, j))
        if self.stop.stop_fn is not None:
            mons.append(_Monitor("stop", self.stop.stop_fn, _ANY))
        return mons

    # -- event bookkeeping ------------------------------------------------------

    def emit(self, kind, surface):
        i = surface if surface >= 0 else self.surface
        c1 = self.gap(i, self.x)
        c2 = self.gap_rate(i, self.x)
        self.rec.event(kind, self.tau, self.x, (c1, c2), i)
        self.n_events += 1
        if self.n_events > self.opts.max_events:
            raise SimulationError(
                f"more than {self.opts.max_events} events by tau = {self.tau:.6g}; "
                "the run looks like an accumulation of impacts"
            )
        if self.stop.stop_event == kind and (
            self.stop.stop_surface is None or self.stop.stop_surface == i
        ):
            self.finished = True

    # -- transitions ---------------------------------------------------------------

    def start_segment(self):
        """Refresh the forward-looking fields of the last sample for a new segment."""
        u = self.u_now()
        f = self.rhs(u)(self.x)
        self.rec.amend_right(self.theta_of_mode(self.x, u), f, u)
        self.k1 = f

    def initial_mode(self):
        u = self.u_now()
        tol = self.opts.event_tol
        gaps = [self.gap(i, self.x) for i in range(len(self.sys.surfaces))]
        i = int(np.argmin(gaps))
        g, gr = gaps[i], self.gap_rate(i, self.x)
        if g > tol:
            self.mode = _FREE
        elif gr < -tol:
            self.mode, self.surface = _AUX, i
        else:
            a_free, a_aux = self.accel_pair(i, self.x, u)
            if a_aux > 0.0 and a_free < 0.0:
                self.mode, self.surface = _SLIDE, i
            else:
                self.mode = _FREE
        f = self.rhs(u)(self.x)
        self.rec.push(self.tau, self.x, self.theta_of_mode(self.x, u), f, u)
        if self.mode == _SLIDE:
            self.emit("slide-start", self.surface)
        elif self.mode == _AUX:
            self.emit("impact-entry", self.surface)
        self.k1 = f

    def enter_aux(self, i):
        self.mode, self.surface = _AUX, i
        self.emit("impact-entry", i)
        self.start_segment()

    def leave_aux(self):
        """The normal rate reached zero; pick sliding or free flight."""
        i = self.surface
        u = self.u_now()
        a_free, a_aux = self.accel_pair(i, self.x, u)
        self.emit("aux-exit", i)
        if a_aux > 0.0 and a_free < 0.0:
            self.mode = _SLIDE
            self.emit("slide-start", i)
        else:
            self.mode = _FREE
        self.start_segment()

    def detach(self):
        self.emit("slide-end", self.surface)
        self.emit("detach", self.surface)
        self.mode = _FREE
        self.start_segment()

    def handle_crossing(self, mon: _Monitor):
        if mon.name == "stop":
            self.finished = True
            return
        if mon.name == "impact":
            i = mon.surface
            u = self.u_now()
            if self.gap_rate(i, self.x) < -self.opts.event_tol:
                self.enter_aux(i)
                return
            a_free, a_aux = self.accel_pair(i, self.x, u)
            if a_aux > 0.0 and a_free < 0.0:
                # grazing touch that sticks
                if self.mode == _SLIDE:
                    self.emit("slide-end", self.surface)
                self.mode, self.surface = _SLIDE, i
                self.emit("slide-start", i)
            # otherwise a grazing touch that lifts off again
            self.start_segment()
            return
        if mon.name == "detach":
            self.detach()
            return
        if mon.name == "aux-exit":
            self.leave_aux()
            return
        if mon.name == "breakpoint":
            # Model functions may switch branch here; recheck the sliding balance
            # a hair past the crossing, on the side the motion is heading.
            if self.mode == _SLIDE:
                probe = self.x.copy()
                direction = 1.0 if self.rec.d_right[-1][0] >= 0.0 else -1.0
                probe[0] += direction * 10.0 * self.opts.event_tol
                a_free, a_aux = self.accel_pair(self.surface, probe, self.u_now())
                if a_free >= 0.0 or a_aux <= 0.0:
                    self.detach()
                    return
            self.start_segment()

    # -- safety nets for crossings that end inside the tolerance band -------------

    def settle_committed_sample(self):
        if self.finished:
            return
        u = self.u_now()
        if self.mode == _AUX:
            if self.gap_rate(self.surface, self.x) >= 0.0:
                self.leave_aux()
        elif self.mode == _SLIDE:
            a_free, a_aux = self.accel_pair(self.surface, self.x, u)
            if a_free > 0.0 or a_aux <= 0.0:
                self.detach()

    # -- stepping ------------------------------------------------------------------

    def run(self):
        check_vector_fields(self.sys, self.x, self.u_now())
        self.initial_mode()
        self.settle_committed_sample()
        guard = 0
        while not self.finished and self.tau < self.stop.tau_final - 1e-13:
            guard += 1
            if guard > 2_000_000:
                raise SimulationError("step budget exhausted")
            if self.mode == _AUX:
                self.step_once(self.opts.max_step / 10.0, adaptive=False)
            else:
                self.step_once(self.h_suggest, adaptive=True)

    def step_once(self, h_try, adaptive):
        opts = self.opts
        u = self.u_now()
        f = self.rhs(u)
        cap = self.stop.tau_final - self.tau
        knot = self.next_knot()
        if math.isfinite(knot):
            # the knot sits on the clock; convert the clock distance into a
            # numerical-time cap through the current clock rate (floored, so a
            # frozen phase, where the switch cannot land anyway, is no cap)
            rate = max(self.theta_of_mode(self.x, u), 0.05)
            cap = min(cap, (knot - float(self.x[-1])) / rate)
        h = min(h_try, opts.max_step, cap)
        if h <= 0.0:
            h = opts.min_step
        k1 = self.k1 if self.k1 is not None else f(self.x)

        while True:
            try:
                x_new, err, k_last = _rk_step(f, self.x, h, k1=k1)
                bad = not np.all(np.isfinite(x_new))
            except (SlidingModeError, FloatingPointError, ZeroDivisionError):
                bad, x_new, err, k_last = True, None, None, None
            if not bad and adaptive:
                en = _error_norm(err, self.x, x_new, opts.rel_tol, opts.abs_tol)
                if en > 1.0:
                    h *= max(0.2, 0.9 * en**-0.2)
                    if h < opts.min_step:
                        raise SimulationError(
                            f"error control failed at tau = {self.tau:.6g} "
                            f"(mode {self.mode})"
                        )
                    continue
                grow = 0.9 * en**-0.2 if en > 1e-10 else 5.0
                self.h_suggest = h * min(5.0, max(0.2, grow))
                break
            if not bad:
                break
            h *= 0.25
            if h < opts.min_step:
                raise SimulationError(
                    f"step size collapsed at tau = {self.tau:.6g} (mode {self.mode})"
                )

        tau0, x0, f0 = self.tau, self.x, k1
        tau1 = tau0 + h
        dense = _hermite(tau0, x0, f0, tau1, x_new, k_last)

        hit = self.earliest_crossing(f, dense, tau0, x0, f0, tau1, x_new, u)
        if hit is not None:
            tau_star, x_star, mon = hit
            f_in = f(x_star)
            self.tau, self.x = tau_star, x_star
            self.rec.push(
                tau_star,
                x_star,
                self.theta_of_mode(x_star, u),
                f_in,
                u,
                deriv_in=f_in,
            )
            self.k1 = f_in
            self.handle_crossing(mon)
            self.settle_committed_sample()
            return

        self.tau, self.x = tau1, x_new
        self.rec.push(tau1, x_new, self.theta_of_mode(x_new, u), k_last, u)
        self.k1 = k_last
        if math.isclose(tau1, knot, rel_tol=0.0, abs_tol=1e-12):
            self.on_knot()
        self.settle_committed_sample()

    def on_knot(self):
        """The control changed value; the sliding balance may no longer hold."""
        if self.mode == _SLIDE:
            a_free, a_aux = self.accel_pair(self.surface, self.x, self.u_now())
            if a_free >= 0.0 or a_aux <= 0.0:
                self.detach()
                return
        self.start_segment()

    def earliest_crossing(self, f, dense, tau0, x0, f0, tau1, x1, u):
        """Scan the monitors over the accepted step; return (tau, state, monitor)
        for the earliest crossing, localized against exact sub-steps."""
        mons = self.monitors(u)
        if not mons:
            return None
        tol = self.opts.event_tol
        tau_m = 0.5 * (tau0 + tau1)
        x_m = dense(tau_m)
        best = None
        for mon in mons:
            try:
                g0, gm, g1 = mon.fn(x0), mon.fn(x_m), mon.fn(x1)
            except (SlidingModeError, FloatingPointError, ZeroDivisionError):
                continue
            for lo, hi, glo, ghi in ((tau0, tau_m, g0, gm), (tau_m, tau1, gm, g1)):
                if not _crossed(glo, ghi, mon.direction, tol):
                    continue
                found = self.localize(mon, f, dense, lo, hi, tau0, x0, f0)
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], found[1], mon)
                break
        return best

    def localize(self, mon, f, dense, lo, hi, tau0, x0, f0):
        """Bracketed root of a monitor on part of a step: Hermite first, then
        polish on exact sub-steps when the cheap answer misses event_tol."""
        tol = self.opts.event_tol

        def g_dense(tau):
            return mon.fn(dense(tau))

        try:
            tau_h = locate_event(g_dense, lo, hi, value_tol=math.inf)
        except BracketingError:
            return None

        def exact_state(tau):
            return _substep(f, x0, tau - tau0, f0)

        x_h = exact_state(tau_h)
        if abs(mon.fn(x_h)) <= tol:
            return tau_h, x_h

        def g_exact(tau):
            return mon.fn(exact_state(tau))

        g_lo, g_hi = g_exact(lo), g_exact(hi)
        if g_lo * g_hi > 0.0:
            # widen to the whole step before giving up on a sign change
            lo = tau0
            g_lo = g_exact(lo)
            if g_lo * g_hi > 0.0:
                return tau_h, x_h
        tau_star = float(brentq(g_exact, lo, hi, xtol=1e-13, rtol=8.9e-16))
        return tau_star, exact_state(tau_star)


def integrate(
    system: FilippovSystem,
    x0,
    control: Optional[PiecewiseConstantControl] = None,
    stop: Optional[StopCondition] = None,
    options: Optional[IntegratorOptions] = None,
) -> Trajectory:
    """Advance the switching system from x0 until the stop condition.

    x0 may be an ExtendedState or a flat vector (q, v, t).  The returned
    trajectory carries per-sample mode weights, segment-consistent derivatives
    for dense output, and the ordered event log.
    """
    if isinstance(x0, ExtendedState):
        x0 = x0.as_vector()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.dim,):
        raise ValueError(f"x0 has shape {x0.shape}, system dimension is {system.dim}")
    stop = stop or StopCondition(tau_final=30.0)
    options = options or IntegratorOptions()
    driver = _Driver(system, x0, control, stop, options)
    driver.run()
    return driver.rec.build()


@dataclass
class SkiRunResult:
    trajectory: Trajectory
    start_height: float
    takeoff_speed: float
    landing_point: np.ndarray
    jump_distance: float
    flight_time: float


def simulate_ski(
    params: SkiParams,
    start_height: float,
    tau_final: float = 80.0,
    options: Optional[IntegratorOptions] = None,
) -> SkiRunResult:
    """Release the skier at rest at ``start_height`` and run through landing.

    The run ends when the landing impact has been fully restored (the
    auxiliary phase on the landing surface exits).
    """
    system = build_ski_system(params)
    x0 = ski_initial_state(params, start_height)
    stop = StopCondition(tau_final=tau_final, stop_event="aux-exit", stop_surface=LAND)
    traj = integrate(system, x0, control=None, stop=stop, options=options)

    impacts = [e for e in traj.events if e.kind == "impact-entry" and e.surface == LAND]
    if not impacts:
        raise SimulationError(
            f"no landing impact before tau = {tau_final} from start height {start_height}"
        )
    imp = impacts[0]
    xi = traj.states[imp.sample_index]
    landing_point = np.array([xi[0], xi[1]])
    takeoff_speed = 0.0
    flight_time = 0.0
    detaches = [e for e in traj.events if e.kind == "detach"]
    if detaches:
        det = detaches[0]
        xd = traj.states[det.sample_index]
        takeoff_speed = float(np.hypot(xd[2], xd[3]))
        flight_time = imp.t_clock - det.t_clock
    return SkiRunResult(
        trajectory=traj,
        start_height=start_height,
        takeoff_speed=takeoff_speed,
        landing_point=landing_point,
        jump_distance=float(landing_point[0] - params.edge),
        flight_time=flight_time,
    )


@dataclass
class PumpRunResult:
    trajectory: Trajectory
    v0: float
    reached_goal: bool
    t_goal: Optional[float]
    final_q1: float


def simulate_pump(
    params: PumpParams,
    v0: float,
    control: Optional[PiecewiseConstantControl] = None,
    q3_0: float = 0.65,
    tau_final: float = 60.0,
    options: Optional[IntegratorOptions] = None,
) -> PumpRunResult:
    """Send the rider down the rollers at v0 m/s until the goal line or the horizon."""
    system = build_pump_system(params)
    x0 = pump_initial_state(params, v0, q3_0=q3_0)
    goal = params.q_goal
    stop = StopCondition(tau_final=tau_final, stop_fn=lambda x: x[0] - goal)
    traj = integrate(system, x0, control=control, stop=stop, options=options)
    final_q1 = float(traj.states[-1, 0])
    reached = final_q1 >= goal - 1e-6
    return PumpRunResult(
        trajectory=traj,
        v0=v0,
        reached_goal=reached,
        t_goal=float(traj.states[-1, -1]) if reached else None,
        final_q1=final_q1,
    )
