"""Finite element simulation of dynamic contact for viscoelastic-viscoplastic piezoelectric bodies."""

__version__ = "0.1.0"

from .constitutive import MaterialParams
from .mesh import LShapeParams, Mesh, generate_lshape, generate_rectangle, refine_uniform
from .timestepper import Loads, Problem, SchemeParams, SimState, Simulation, Trajectory, run

__all__ = [
    "LShapeParams",
    "Loads",
    "MaterialParams",
    "Mesh",
    "Problem",
    "SchemeParams",
    "SimState",
    "Simulation",
    "Trajectory",
    "generate_lshape",
    "generate_rectangle",
    "refine_uniform",
    "run",
]
