"""Direct transcription of the minimum-time pump-track problem and its
homotopy-driven solution path."""

from .transcription import PumpTranscription, theta_aux, theta_free
from .solve import HomotopyStage, OcpSolution, solve_pump_ocp

__all__ = [
    "PumpTranscription",
    "theta_free",
    "theta_aux",
    "HomotopyStage",
    "OcpSolution",
    "solve_pump_ocp",
]
