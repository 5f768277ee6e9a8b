"""Finite-element BDF2 tangent-plane integrator for the Landau-Lifshitz-Gilbert equation."""

from .fem import P1Space, ritz_project, ritz_project_vector, triangle_rule
from .integrator import (
    InvariantViolation,
    SimConfig,
    StepRecord,
    Trajectory,
    bdf2_step,
    energy,
    eta_indicators,
    first_step,
    initial_field,
    interpolate_in_time,
    run_simulation,
)
from .mesh import TriMesh, build_mesh, crisscross_unit_square, diagonal_unit_square, prolong, uniform_bisection
from .problems import ProblemSpec, get_problem
from .sparse import SolverError
from .tangent import TangentFrame, build_frame

__version__ = "0.1.0"
