"""Spectral 2D periodic Navier-Stokes solver with Campanato-type Hoelder diagnostics."""

from .spectral import Grid
from .forcing import ForcingSpec, ForcingField
from .solver import InitialCondition, NavierStokesSolver, SolverConfig, Trajectory, run
from .campanato import ParabolicCylinder, SpaceTimeField
from .iteration import IterationParams, iterate_theta

__all__ = [
    "Grid", "ForcingSpec", "ForcingField", "InitialCondition", "NavierStokesSolver", "SolverConfig",
    "Trajectory", "run", "ParabolicCylinder", "SpaceTimeField", "IterationParams", "iterate_theta",
]
__version__ = "0.1.0"
