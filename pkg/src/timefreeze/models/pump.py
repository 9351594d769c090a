"""Pump-track rider model: two point masses on a vertical link above a wavy track.

State layout (extended): x = (q1, q2, q3, v1, v2, v3, t) where q1 is horizontal
progress along the track, q2 is the normal slack between the lower mass and the
track surface, and q3 is the length of the actuated link between the two
masses.  The single control u is the force the rider exerts along the link.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..core import ExtendedState, FilippovSystem, SwitchingFunctions

__all__ = [
    "PumpParams",
    "track_height",
    "pump_accelerations",
    "build_pump_system",
    "pump_energy",
    "pump_initial_state",
    "rider_positions",
    "validate_geometry",
]


@dataclass(frozen=True)
class PumpParams:
    """Physical and geometric parameters of the pump-track model (SI units)."""

    m1: float = 15.0          # lower mass: bicycle + legs [kg]
    m2: float = 75.0          # upper mass: rider torso [kg]
    g: float = 9.81           # gravity [m/s^2]
    k_n: float = 50.0         # auxiliary restoration rate [1/s per unit gap rate]
    amplitude: float = 0.28   # roller half-height A [m]
    wavelength: float = 5.0   # roller period W [m]
    q_goal: float = 20.0      # finish line along the track [m]
    l_min: float = 0.4        # shortest admissible link length [m]
    l_max: float = 0.9        # longest admissible link length [m]
    u_min: float = -108.25    # pull limit [N]
    u_max: float = 376.875    # push limit [N]

    @property
    def wave_number(self) -> float:
        return 2.0 * np.pi / self.wavelength


def _window(s):
    """Quintic smoothstep fade-out 1 -> 0 on s in [0, 1], C^2 at both ends.

    Returns (w, dw/ds, d2w/ds2).
    """
    s = np.clip(s, 0.0, 1.0)
    w = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    dw = -s * s * (30.0 - 60.0 * s + 30.0 * s * s)
    ddw = -s * (60.0 - 180.0 * s + 120.0 * s * s)
    return w, dw, ddw


def track_height(p: PumpParams, q1):
    """Height profile of the rollers and its first two derivatives.

    The profile is A*(1 - cos(k*q1)) while q1 <= q_goal and fades to flat
    ground over one extra wavelength past the goal so the run-out is level.
    Accepts scalars, arrays, or dual numbers in q1; returns (h, dh, ddh).
    """
    k = p.wave_number
    base = p.amplitude * (1.0 - np.cos(k * q1))
    dbase = p.amplitude * k * np.sin(k * q1)
    ddbase = p.amplitude * k * k * np.cos(k * q1)
    s = (q1 - p.q_goal) / p.wavelength
    w, dw, ddw = _window(s)
    h = base * w
    dh = dbase * w + base * dw / p.wavelength
    ddh = ddbase * w + 2.0 * dbase * dw / p.wavelength + base * ddw / p.wavelength**2
    return h, dh, ddh


def pump_accelerations(p: PumpParams, q1, v1, u):
    """Slack and link accelerations away from the track (free mode).

    Works componentwise so the same expressions serve the simulator (floats)
    and the transcription kernels (dual numbers).
    """
    _, _, ddh = track_height(p, q1)
    a_slack = -(v1 * v1) * ddh - u / p.m1 - p.g
    a_link = u * (p.m1 + p.m2) / (p.m1 * p.m2)
    return a_slack, a_link


def build_pump_system(p: PumpParams) -> FilippovSystem:
    """Assemble the two-mode vector fields and switching functions."""

    def f_free(x, u):
        uu = u[0] if np.ndim(u) > 0 else u
        a_slack, a_link = pump_accelerations(p, x[0], x[3], uu)
        return np.array([x[3], x[4], x[5], 0.0, a_slack, a_link, 1.0])

    def f_aux(x):
        _, dh, _ = track_height(p, x[0])
        out = np.zeros(7)
        out[3] = -p.k_n * dh
        out[4] = p.k_n
        return out

    switching = SwitchingFunctions(
        c1=lambda x: x[1],
        c2=lambda x: x[4],
        grad_c1=lambda x: np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        grad_c2=lambda x: np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        name="track-contact",
    )

    return FilippovSystem(
        n_q=3,
        n_u=1,
        f_free=f_free,
        f_aux=f_aux,
        switching=switching,
        name="pump-track",
    )


def pump_initial_state(p: PumpParams, v0: float, q3_0: float = 0.65) -> ExtendedState:
    """Rider at the start of the track, in contact, moving at v0 m/s."""
    if not p.l_min <= q3_0 <= p.l_max:
        raise ValueError(f"initial link length {q3_0} outside [{p.l_min}, {p.l_max}]")
    return ExtendedState(
        q=np.array([0.0, 0.0, q3_0]),
        v=np.array([v0, 0.0, 0.0]),
        t_clock=0.0,
    )


def rider_positions(p: PumpParams, x) -> tuple[np.ndarray, np.ndarray]:
    """World positions (horizontal, vertical) of the bicycle mass and the rider mass."""
    x = np.asarray(x, dtype=float)
    h, _, _ = track_height(p, x[0])
    bike = np.array([x[0], h + x[1]])
    rider = np.array([x[0], h + x[1] + x[2]])
    return bike, rider


def pump_energy(p: PumpParams, x) -> float:
    """Mechanical energy of both masses in world coordinates.

    The lower mass rides at height h + q2 and the upper one a link length
    above it; both share the horizontal velocity v1.
    """
    x = np.asarray(x, dtype=float)
    h, dh, _ = track_height(p, x[0])
    vz1 = dh * x[3] + x[4]
    vz2 = vz1 + x[5]
    ke = 0.5 * p.m1 * (x[3] ** 2 + vz1**2) + 0.5 * p.m2 * (x[3] ** 2 + vz2**2)
    pe = p.m1 * p.g * (h + x[1]) + p.m2 * p.g * (h + x[1] + x[2])
    return ke + pe


def validate_geometry(p: PumpParams) -> list[str]:
    """Check parameter sanity; returns a list of violated conditions (empty when valid)."""
    problems: list[str] = []
    if p.m1 <= 0.0 or p.m2 <= 0.0:
        problems.append("masses must be positive")
    if p.g <= 0.0:
        problems.append("gravity must be positive")
    if p.k_n <= 0.0:
        problems.append("auxiliary rate k_n must be positive")
    if p.amplitude < 0.0:
        problems.append("roller amplitude must be non-negative")
    if p.wavelength <= 0.0:
        problems.append("roller wavelength must be positive")
    if p.q_goal <= 0.0:
        problems.append("goal position must be positive")
    if not (0.0 < p.l_min < p.l_max):
        problems.append("link bounds must satisfy 0 < l_min < l_max")
    if p.u_min >= p.u_max:
        problems.append("control bounds must satisfy u_min < u_max")
    return problems
