"""P1 finite elements for a nonsmooth quasilinear elliptic optimal control problem."""
from .coeff import Branch, PC1Coeff
from .mesh import QuadRule, TriMesh, quad_rule, uniform_unit_square
from .ocp import OcpSolution, OcpSpec, SsnOptions, solve_pc_control, ssn_solve

__all__ = [
    "Branch", "PC1Coeff", "QuadRule", "TriMesh", "quad_rule", "uniform_unit_square",
    "OcpSolution", "OcpSpec", "SsnOptions", "solve_pc_control", "ssn_solve",
]
