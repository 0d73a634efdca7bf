"""Numerical toolkit for prescribed-phase curvature equations on graphs.

Submodules
----------
symfunc
    Elementary symmetric functions, Newton tensors, phase-constrained sampling.
geometry
    Discrete curvature of graph patches and derived quantities.
jacobi
    Sampled verification of the Jacobi inequality for ``log(H + J)``.
solver
    Dirichlet solver by damped Newton with continuation.
ot2d
    The two-dimensional equation as an optimal transport problem.
"""

from .geometry import CurvatureField, GraphPatch, curvature_field
from .jacobi import JacobiReport, verify_jacobi
from .ot2d import OTInstance, discrete_ot_oracle, ot_map
from .solver import DirichletProblem, SolveReport, cap_problem, solve
from .symfunc import KappaVector, Phase, linearization, newton_tensor, sigma_k

__version__ = "0.1.0"

__all__ = [
    "CurvatureField",
    "DirichletProblem",
    "GraphPatch",
    "JacobiReport",
    "KappaVector",
    "OTInstance",
    "Phase",
    "SolveReport",
    "cap_problem",
    "curvature_field",
    "discrete_ot_oracle",
    "linearization",
    "newton_tensor",
    "ot_map",
    "sigma_k",
    "solve",
    "verify_jacobi",
]
