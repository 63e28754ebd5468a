"""Pseudo-spectral solver and verification harness for tamed MHD on the periodic cube."""

from .spectral import Grid, NormReport, SpectralState
from .taming import TamingFunction
from .timestepper import BlowUpError, SolverConfig, TrajectoryRecord, run, step, untamed_reference_step

__all__ = [
    "Grid",
    "NormReport",
    "SpectralState",
    "TamingFunction",
    "BlowUpError",
    "SolverConfig",
    "TrajectoryRecord",
    "run",
    "step",
    "untamed_reference_step",
]

__version__ = "0.1.0"
