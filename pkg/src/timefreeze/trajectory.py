"""Trajectory containers for extended-time integration output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TimefreezeError

__all__ = [
    "EVENT_KINDS",
    "TrajectoryEvent",
    "Trajectory",
    "PhysicalTrajectory",
    "recover_physical",
]

EVENT_KINDS = ("impact-entry", "aux-exit", "slide-start", "slide-end", "detach")


@dataclass(frozen=True)
class TrajectoryEvent:
    """A mode-transition event located on the numerical time axis."""

    tau: float
    t_clock: float
    kind: str
    c_values: tuple[float, float]
    surface: int = 0
    sample_index: int = -1

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass
class Trajectory:
    """Samples of the extended state over numerical time.

    ``theta1[i]`` is the first mode weight of the segment starting at sample
    ``i`` (the last sample repeats its segment's weight).  ``derivs[i]`` is the
    extended-state derivative at sample ``i`` under that same segment's
    dynamics, while ``derivs_end[i]`` is the derivative under the segment
    ending at ``i``; they differ only at mode-transition samples.  Keeping both
    makes cubic Hermite interpolation segment-consistent on every interval.
    """

    n_q: int
    tau_grid: np.ndarray
    states: np.ndarray
    theta1: np.ndarray
    derivs: np.ndarray
    derivs_end: np.ndarray
    controls: np.ndarray
    events: list[TrajectoryEvent] = field(default_factory=list)

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.theta1 = np.asarray(self.theta1, dtype=float)
        self.derivs = np.asarray(self.derivs, dtype=float)
        self.derivs_end = np.asarray(self.derivs_end, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        n = self.tau_grid.shape[0]
        dim = 2 * self.n_q + 1
        if self.states.shape != (n, dim):
            raise ValueError(f"states shape {self.states.shape} != ({n}, {dim})")
        if np.any(np.diff(self.tau_grid) <= 0.0):
            raise ValueError("tau_grid must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return self.tau_grid.shape[0]

    @property
    def q(self) -> np.ndarray:
        return self.states[:, : self.n_q]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, self.n_q : 2 * self.n_q]

    @property
    def t_clock(self) -> np.ndarray:
        return self.states[:, -1]

    def sample(self, tau) -> np.ndarray:
        """Cubic Hermite interpolation of the state at numerical time(s) tau."""
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        taus = np.atleast_1d(tau)
        lo, hi = self.tau_grid[0], self.tau_grid[-1]
        if np.any(taus < lo - 1e-12) or np.any(taus > hi + 1e-12):
            raise ValueError("sample time outside trajectory range")
        taus = np.clip(taus, lo, hi)
        idx = np.clip(np.searchsorted(self.tau_grid, taus, side="right") - 1, 0, self.n_samples - 2)
        t0 = self.tau_grid[idx]
        h = self.tau_grid[idx + 1] - t0
        s = ((taus - t0) / h)[:, None]
        x0, x1 = self.states[idx], self.states[idx + 1]
        d0, d1 = self.derivs[idx] * h[:, None], self.derivs_end[idx + 1] * h[:, None]
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = s * s * (s - 1.0)
        out = h00 * x0 + h10 * d0 + h01 * x1 + h11 * d1
        return out[0] if scalar else out

    def event_kinds(self) -> list[str]:
        return [e.kind for e in self.events]


@dataclass
class PhysicalTrajectory:
    """States over physical time, auxiliary transients collapsed to instants.

    At an impact the same physical time appears twice, carrying the pre- and
    post-impact velocities.
    """

    n_q: int
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    impact_times: list[float] = field(default_factory=list)


def recover_physical(traj: Trajectory, theta_tol: float = 0.0) -> PhysicalTrajectory:
    """Strip frozen-clock segments from a trajectory.

    Maximal runs of samples whose segment weight ``theta1 <= theta_tol``
    contribute only their first sample (the pre-impact state) and the first
    sample after the run (the post-impact state); both share one physical
    time.  A trajectory that never leaves the auxiliary mode collapses to the
    entry/end pair.
    """
    th = traj.theta1
    n = traj.n_samples
    frozen = th <= theta_tol
    keep = np.ones(n, dtype=bool)
    for i in range(1, n - 1):
        if frozen[i] and frozen[i - 1]:
            keep[i] = False
    t = traj.t_clock[keep]
    if np.any(np.diff(t) < -1e-12):
        raise TimefreezeError("physical clock decreased along trajectory")
    impact_times = []
    idx = np.flatnonzero(keep)
    for a, b in zip(idx[:-1], idx[1:]):
        if frozen[a] and not frozen[b]:
            impact_times.append(float(traj.t_clock[b]))
    return PhysicalTrajectory(
        n_q=traj.n_q,
        t=t,
        q=traj.q[keep],
        v=traj.v[keep],
        tau=traj.tau_grid[keep],
        impact_times=impact_times,
    )
