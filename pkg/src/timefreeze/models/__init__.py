"""Concrete mechanical models expressed as two-mode switching systems."""

from .pump import (
    PumpParams,
    build_pump_system,
    pump_accelerations,
    pump_energy,
    pump_initial_state,
    rider_positions,
    track_height,
)
from .pump import validate_geometry as validate_pump_geometry
from .ski import (
    SkiParams,
    build_ski_system,
    landing_height,
    ski_energy,
    ski_initial_state,
    ski_region,
    ski_surface,
    takeoff_height,
)
from .ski import validate_geometry as validate_ski_geometry

__all__ = [
    "PumpParams",
    "SkiParams",
    "build_pump_system",
    "build_ski_system",
    "landing_height",
    "pump_accelerations",
    "pump_energy",
    "pump_initial_state",
    "rider_positions",
    "ski_energy",
    "ski_initial_state",
    "ski_region",
    "ski_surface",
    "takeoff_height",
    "track_height",
    "validate_pump_geometry",
    "validate_ski_geometry",
]
