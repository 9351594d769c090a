"""Ski-jump model: a point mass sliding down an in-run, flying, and landing.

State layout (extended): x = (q1, q2, v1, v2, t) with q1 horizontal position
and q2 altitude.  There is no control.  Two surfaces matter: the take-off
ramp (an exponential in-run with a concave continuation past the edge) and
the landing slope below it.  Whichever surface is nearer vertically is the
one contact events are resolved against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ExtendedState, FilippovSystem, SwitchingFunctions

__all__ = [
    "SkiParams",
    "takeoff_height",
    "landing_height",
    "ski_surface",
    "build_ski_system",
    "ski_energy",
    "ski_initial_state",
    "ski_region",
    "validate_geometry",
]

JUMP = 0
LAND = 1


@dataclass(frozen=True)
class SkiParams:
    """Geometry and physics of the jump (SI units, unit mass)."""

    g: float = 9.81           # gravity [m/s^2]
    k_n: float = 50.0         # auxiliary restoration rate
    ramp_height: float = 55.0     # in-run height at q1 = 0 [m]
    ramp_decay: float = 15.0      # exponential decay length of the in-run [m]
    edge: float = 30.0            # horizontal position of the take-off edge [m]
    land_slope: float = 0.7       # initial downhill grade of the landing slope
    land_flatten: float = 0.004   # quadratic flattening of the landing slope [1/m]
    smooth_eps: float = 0.01      # softening of the landing-slope ramp [m^2]

    @property
    def edge_height(self) -> float:
        return self.ramp_height * np.exp(-self.edge / self.ramp_decay)


def takeoff_height(p: SkiParams, q1):
    """Take-off surface and derivatives: exponential in-run, then a concave
    parabola continuing with matched value and slope past the edge."""
    h_e = p.edge_height
    slope_e = -h_e / p.ramp_decay
    on_ramp = q1 <= p.edge
    d = q1 - p.edge
    exp_part = p.ramp_height * np.exp(-np.minimum(q1, p.edge) / p.ramp_decay)
    h = np.where(on_ramp, exp_part, h_e + slope_e * d - 0.5 * d * d)
    dh = np.where(on_ramp, -exp_part / p.ramp_decay, slope_e - d)
    ddh = np.where(on_ramp, exp_part / p.ramp_decay**2, -1.0)
    return h, dh, ddh


def _soft_ramp(d, eps):
    """smooth max(d, 0): 0.5*(d + sqrt(d^2 + eps)), with derivatives."""
    r = np.sqrt(d * d + eps)
    s = 0.5 * (d + r)
    ds = 0.5 * (1.0 + d / r)
    dds = 0.5 * eps / (r * r * r)
    return s, ds, dds


def landing_height(p: SkiParams, q1):
    """Landing surface and derivatives: from the edge height, drop with grade
    land_slope, gradually flattening, all smoothed so it is C^2 everywhere."""
    d = q1 - p.edge
    s, ds, dds = _soft_ramp(d, p.smooth_eps)
    h = p.edge_height - p.land_slope * s + p.land_flatten * s * s
    coeff = -p.land_slope + 2.0 * p.land_flatten * s
    dh = coeff * ds
    ddh = coeff * dds + 2.0 * p.land_flatten * ds * ds
    return h, dh, ddh


_SURFACES = (takeoff_height, landing_height)


def ski_surface(p: SkiParams, which: int, q1):
    """Height and first two derivatives of surface `which` (0 take-off, 1 landing)."""
    return _SURFACES[which](p, q1)


def _gap(p: SkiParams, which: int, x):
    h, _, _ = ski_surface(p, which, x[0])
    return x[1] - h


def _gap_rate(p: SkiParams, which: int, x):
    _, dh, _ = ski_surface(p, which, x[0])
    return x[3] - dh * x[2]


def build_ski_system(p: SkiParams) -> FilippovSystem:
    def f_free(x, u=None):
        return np.array([x[2], x[3], 0.0, -p.g, 1.0])

    def active_surface(x):
        return int(np.argmin([_gap(p, i, x) for i in range(len(_SURFACES))]))

    def f_aux(x):
        which = active_surface(x)
        _, dh, _ = ski_surface(p, which, x[0])
        return np.array([0.0, 0.0, -p.k_n * dh, p.k_n, 0.0])

    def _switching_for(which: int) -> SwitchingFunctions:
        def grad_c1(x, which=which):
            _, dh, _ = ski_surface(p, which, x[0])
            return np.array([-dh, 1.0, 0.0, 0.0, 0.0])

        def grad_c2(x, which=which):
            _, dh, ddh = ski_surface(p, which, x[0])
            return np.array([-ddh * x[2], 0.0, -dh, 1.0, 0.0])

        return SwitchingFunctions(
            c1=lambda x, which=which: _gap(p, which, x),
            c2=lambda x, which=which: _gap_rate(p, which, x),
            grad_c1=grad_c1,
            grad_c2=grad_c2,
            name=("take-off", "landing")[which],
        )

    per_surface = tuple(_switching_for(i) for i in range(len(_SURFACES)))

    def dispatch(getter):
        return lambda x: getter(per_surface[active_surface(x)])(x)

    switching = SwitchingFunctions(
        c1=dispatch(lambda s: s.c1),
        c2=dispatch(lambda s: s.c2),
        grad_c1=dispatch(lambda s: s.grad_c1),
        grad_c2=dispatch(lambda s: s.grad_c2),
        name="nearest-surface",
    )

    return FilippovSystem(
        n_q=2,
        n_u=0,
        f_free=f_free,
        f_aux=f_aux,
        switching=switching,
        surfaces=per_surface,
        active_surface=active_surface,
        breakpoints=(lambda x: x[0] - p.edge,),
        name="ski-jump",
    )


def ski_initial_state(p: SkiParams, start_height: float) -> ExtendedState:
    """At rest on the in-run at the given altitude."""
    if not p.edge_height <= start_height <= p.ramp_height:
        raise ValueError(
            f"start height {start_height} not on the in-run "
            f"[{p.edge_height:.4f}, {p.ramp_height}]"
        )
    q1 = p.ramp_decay * np.log(p.ramp_height / start_height)
    return ExtendedState(q=np.array([q1, start_height]), v=np.zeros(2), t_clock=0.0)


def ski_region(p: SkiParams, x, tol: float = 1e-9) -> str:
    """Coarse position label from the two surface gaps.

    "R1": above both surfaces, "R2": below the take-off surface,
    "R3": below the landing surface (and not below the take-off one),
    "boundary": within tol of either surface without penetrating the other.
    """
    x = np.asarray(x, dtype=float)
    g_jump = _gap(p, JUMP, x)
    g_land = _gap(p, LAND, x)
    if g_jump < -tol:
        return "R2"
    if g_land < -tol:
        return "R3"
    if abs(g_jump) <= tol or abs(g_land) <= tol:
        return "boundary"
    return "R1"


def ski_energy(p: SkiParams, x) -> float:
    """Mechanical energy per unit mass: kinetic plus gravitational."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x[2] ** 2 + x[3] ** 2) + p.g * x[1]


def validate_geometry(p: SkiParams) -> list[str]:
    """Check the two surfaces form a jump; returns violated conditions (empty when valid)."""
    problems: list[str] = []
    if p.g <= 0.0:
        problems.append("gravity must be positive")
    if p.k_n <= 0.0:
        problems.append("auxiliary rate k_n must be positive")
    if p.ramp_height <= 0.0 or p.ramp_decay <= 0.0 or p.edge <= 0.0:
        problems.append("in-run parameters must be positive")
    if p.smooth_eps <= 0.0:
        problems.append("smoothing epsilon must be positive")
    if p.land_slope <= 0.0:
        problems.append("landing slope must descend from the edge (land_slope > 0)")
    elif p.land_flatten < 0.0:
        problems.append("landing flattening must be non-negative")
    else:
        qs = np.linspace(0.5, p.edge - 0.5, 60)
        h_j = takeoff_height(p, qs)[0]
        h_l = landing_height(p, qs)[0]
        if np.any(h_l >= h_j):
            problems.append("landing surface must stay below the in-run interior")
        # The flight must come down somewhere: past the edge the landing
        # slope has to dip visibly below the continued take-off surface
        # (the rounding near the edge dips a few 1e-11 on its own, so ask
        # for at least a millimetre of clearance).
        qs_out = np.linspace(p.edge, p.edge + 4.0 * p.ramp_decay, 200)
        gap = landing_height(p, qs_out)[0] - takeoff_height(p, qs_out)[0]
        if not np.any(gap < -1e-3):
            problems.append("landing surface never drops below the continued take-off surface")
    return problems
