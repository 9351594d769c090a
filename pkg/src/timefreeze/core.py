"""Core types and operations for two-mode switched mechanical systems.

The extended state is ``(q, v, t_clock)``: generalized positions, velocities
and a physical clock that the dynamics itself drives.  Free motion advances
the clock at rate one; the auxiliary (contact-restoring) mode advances it at
rate zero, so contact transients occupy numerical time but no physical time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "TimefreezeError",
    "EvaluationError",
    "SlidingModeError",
    "ExtendedState",
    "SwitchingFunctions",
    "FilippovSystem",
    "ModeWeights",
    "RegionLabel",
    "BOUNDARY_TOL",
    "classify_region",
    "filippov_rhs",
    "sliding_weights",
    "check_vector_fields",
]

BOUNDARY_TOL = 1e-9


class TimefreezeError(Exception):
    """Base class for errors raised by this package."""


class EvaluationError(TimefreezeError):
    """A model function produced a non-finite or ill-shaped value."""


class SlidingModeError(TimefreezeError):
    """Sliding weights are undefined at the queried state.

    ``reason`` is ``"free-mode"`` when the free field already points out of
    the surface (the caller should switch to pure free mode) and
    ``"auxiliary"`` when the auxiliary field fails to push back toward the
    boundary, which indicates a misconfigured model.
    """

    def __init__(self, message: str, reason: str, a_free: float, a_aux: float):
        super().__init__(message)
        self.reason = reason
        self.a_free = a_free
        self.a_aux = a_aux


@dataclass
class ExtendedState:
    """Positions, velocities and the physical clock."""

    q: np.ndarray
    v: np.ndarray
    t_clock: float

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        self.t_clock = float(self.t_clock)
        if self.q.shape != self.v.shape or self.q.ndim != 1:
            raise ValueError(
                f"q and v must be 1-d arrays of equal length, got {self.q.shape} and {self.v.shape}"
            )
        if not np.isfinite(self.q).all() or not np.isfinite(self.v).all():
            raise EvaluationError("non-finite entries in extended state")
        if not np.isfinite(self.t_clock) or self.t_clock < 0.0:
            raise ValueError(f"t_clock must be finite and >= 0, got {self.t_clock}")

    @property
    def n_q(self) -> int:
        return self.q.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.v, [self.t_clock]])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "ExtendedState":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] < 3 or x.shape[0] % 2 == 0:
            raise ValueError(f"extended state vector must have odd length >= 3, got shape {x.shape}")
        n = (x.shape[0] - 1) // 2
        return cls(q=x[:n], v=x[n : 2 * n], t_clock=x[-1])


@dataclass(frozen=True)
class SwitchingFunctions:
    """The switching pair: gap ``c1``, its total time derivative ``c2``.

    All callables take the flat extended state vector.  Gradients are with
    respect to that vector (clock component included, normally zero).
    """

    c1: Callable[[np.ndarray], float]
    c2: Callable[[np.ndarray], float]
    grad_c1: Callable[[np.ndarray], np.ndarray]
    grad_c2: Callable[[np.ndarray], np.ndarray]
    name: str = ""


@dataclass(frozen=True)
class FilippovSystem:
    """Two-mode switched system in extended time.

    ``f_free(x, u)`` must carry clock rate exactly 1, ``f_aux(x)`` clock rate
    exactly 0 and no control dependence.  ``switching`` evaluates the pair for
    the currently active surface; ``surfaces`` lists every surface that event
    detection should monitor (one entry for single-surface models).
    ``breakpoints`` are scalar monitors whose zero crossings mark kinks of the
    model functions; integration restarts there so root finding only ever sees
    smooth switching values.
    """

    n_q: int
    n_u: int
    f_free: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_aux: Callable[[np.ndarray], np.ndarray]
    switching: SwitchingFunctions
    surfaces: tuple[SwitchingFunctions, ...] = ()
    active_surface: Callable[[np.ndarray], int] | None = None
    breakpoints: tuple[Callable[[np.ndarray], float], ...] = ()
    name: str = ""

    def __post_init__(self):
        if not self.surfaces:
            object.__setattr__(self, "surfaces", (self.switching,))

    @property
    def dim(self) -> int:
        return 2 * self.n_q + 1

    def surface_index(self, x: np.ndarray) -> int:
        if self.active_surface is None:
            return 0
        return self.active_surface(x)


@dataclass(frozen=True)
class ModeWeights:
    """Convex weights of the two modes; theta2 is derived, so it cannot drift."""

    theta1: float

    def __post_init__(self):
        t1 = float(self.theta1)
        if not np.isfinite(t1) or t1 < -1e-12 or t1 > 1.0 + 1e-12:
            raise ValueError(f"theta1 must lie in [0, 1], got {t1}")
        object.__setattr__(self, "theta1", min(max(t1, 0.0), 1.0))

    @property
    def theta2(self) -> float:
        return 1.0 - self.theta1


class RegionLabel(enum.Enum):
    R1 = "R1"
    R2 = "R2"
    BOUNDARY_C1 = "boundary-c1"
    BOUNDARY_C2 = "boundary-c2"
    BOUNDARY_BOTH = "boundary-both"

    @property
    def is_boundary(self) -> bool:
        return self not in (RegionLabel.R1, RegionLabel.R2)


def _check_finite_pair(c1: float, c2: float) -> None:
    if not np.isfinite(c1):
        raise EvaluationError("switching function c1 evaluated non-finite")
    if not np.isfinite(c2):
        raise EvaluationError("switching function c2 evaluated non-finite")


def classify_region(
    system: FilippovSystem, x: np.ndarray, tol: float = BOUNDARY_TOL
) -> RegionLabel:
    """Label the state's region.

    Region one is free motion: positive gap, or negative gap with the gap
    already opening (``c2 > 0``).  Region two (both negative) is where the
    auxiliary mode acts.  States within ``tol`` of either zero level set get a
    boundary label naming each on-boundary component.
    """
    x = np.asarray(x, dtype=float)
    c1 = float(system.switching.c1(x))
    c2 = float(system.switching.c2(x))
    _check_finite_pair(c1, c2)
    on1 = abs(c1) <= tol
    on2 = abs(c2) <= tol
    if on1 and on2:
        return RegionLabel.BOUNDARY_BOTH
    if on1:
        return RegionLabel.BOUNDARY_C1
    if c1 > tol:
        return RegionLabel.R1
    # below the surface: the sign of c2 decides
    if on2:
        return RegionLabel.BOUNDARY_C2
    return RegionLabel.R1 if c2 > tol else RegionLabel.R2


def filippov_rhs(
    system: FilippovSystem, x: np.ndarray, u: np.ndarray, weights: ModeWeights
) -> np.ndarray:
    """Convex combination of the two mode fields at the given weights."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float)) if system.n_u else np.zeros(0)
    if x.shape != (system.dim,):
        raise ValueError(f"state has shape {x.shape}, system expects ({system.dim},)")
    if u.shape != (system.n_u,):
        raise ValueError(f"control has shape {u.shape}, system expects ({system.n_u},)")
    f1 = np.asarray(system.f_free(x, u), dtype=float)
    f2 = np.asarray(system.f_aux(x), dtype=float)
    if f1.shape != (system.dim,) or f2.shape != (system.dim,):
        raise EvaluationError(
            f"mode fields returned shapes {f1.shape} / {f2.shape}, expected ({system.dim},)"
        )
    return weights.theta1 * f1 + weights.theta2 * f2


def sliding_weights(system: FilippovSystem, x: np.ndarray, u: np.ndarray) -> ModeWeights:
    """Equivalent-dynamics weights on the ``c2 = 0`` boundary.

    With ``a_free = grad(c2) . f_free`` and ``a_aux = grad(c2) . f_aux`` the
    boundary is attractive from the auxiliary side exactly when
    ``a_free < 0 < a_aux``; the convex combination that cancels the drift of
    ``c2`` is ``theta1 = a_aux / (a_aux - a_free)``.
    """
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float)) if system.n_u else np.zeros(0)
    g = np.asarray(system.switching.grad_c2(x), dtype=float)
    a_free = float(g @ np.asarray(system.f_free(x, u), dtype=float))
    a_aux = float(g @ np.asarray(system.f_aux(x), dtype=float))
    if not np.isfinite(a_free) or not np.isfinite(a_aux):
        raise EvaluationError("non-finite directional derivative in sliding_weights")
    if a_aux <= 0.0:
        raise SlidingModeError(
            f"auxiliary field does not restore the boundary (a_aux = {a_aux:.3e}); "
            "the model's auxiliary dynamics are misconfigured",
            reason="auxiliary",
            a_free=a_free,
            a_aux=a_aux,
        )
    if a_free >= 0.0:
        raise SlidingModeError(
            f"free field leaves the boundary (a_free = {a_free:.3e}); switch to pure free mode",
            reason="free-mode",
            a_free=a_free,
            a_aux=a_aux,
        )
    return ModeWeights(theta1=a_aux / (a_aux - a_free))


def check_vector_fields(system: FilippovSystem, x: np.ndarray, u: np.ndarray) -> None:
    """Probe the mode-field contracts at one state: clock rates 1 and 0."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float)) if system.n_u else np.zeros(0)
    f1 = np.asarray(system.f_free(x, u), dtype=float)
    f2 = np.asarray(system.f_aux(x), dtype=float)
    if f1.shape != (system.dim,) or f2.shape != (system.dim,):
        raise EvaluationError("mode field shape does not match system dimension")
    if f1[-1] != 1.0:
        raise EvaluationError(f"f_free clock rate must be exactly 1, got {f1[-1]!r}")
    if f2[-1] != 0.0:
        raise EvaluationError(f"f_aux clock rate must be exactly 0, got {f2[-1]!r}")
    if not np.isfinite(f1).all() or not np.isfinite(f2).all():
        raise EvaluationError("non-finite mode field at probe state")
