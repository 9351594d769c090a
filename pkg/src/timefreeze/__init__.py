"""Simulation and optimal control of mechanical systems with impacts,
reformulated so contact transients run on a frozen clock."""

from .core import (
    BOUNDARY_TOL,
    EvaluationError,
    ExtendedState,
    FilippovSystem,
    ModeWeights,
    RegionLabel,
    SlidingModeError,
    SwitchingFunctions,
    TimefreezeError,
    classify_region,
    filippov_rhs,
    sliding_weights,
)
from .models import (
    PumpParams,
    SkiParams,
    build_pump_system,
    build_ski_system,
    pump_initial_state,
    ski_initial_state,
    track_height,
    validate_pump_geometry,
    validate_ski_geometry,
)
from .sim import (
    BracketingError,
    IntegratorOptions,
    PiecewiseConstantControl,
    PumpRunResult,
    SimulationError,
    SkiRunResult,
    StopCondition,
    integrate,
    locate_event,
    simulate_pump,
    simulate_ski,
)
from .trajectory import (
    PhysicalTrajectory,
    Trajectory,
    TrajectoryEvent,
    recover_physical,
)

__version__ = "0.1.0"

__all__ = [
    "BOUNDARY_TOL",
    "BracketingError",
    "EvaluationError",
    "ExtendedState",
    "FilippovSystem",
    "IntegratorOptions",
    "ModeWeights",
    "PhysicalTrajectory",
    "PiecewiseConstantControl",
    "PumpParams",
    "PumpRunResult",
    "RegionLabel",
    "SimulationError",
    "SkiParams",
    "SkiRunResult",
    "SlidingModeError",
    "StopCondition",
    "SwitchingFunctions",
    "TimefreezeError",
    "Trajectory",
    "TrajectoryEvent",
    "build_pump_system",
    "build_ski_system",
    "classify_region",
    "filippov_rhs",
    "integrate",
    "locate_event",
    "pump_initial_state",
    "recover_physical",
    "simulate_pump",
    "simulate_ski",
    "ski_initial_state",
    "sliding_weights",
    "track_height",
    "validate_pump_geometry",
    "validate_ski_geometry",
    "__version__",
]
