"""Discrete state, linearized state and adjoint equations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from .coeff import PC1Coeff
from .mesh import TriMesh
from .sparse import SolverOptions, solve, transpose

log = logging.getLogger(__name__)


@dataclass
class NewtonOptions:
    rtol: float = 1e-11
    max_iter: int = 50
    damping: bool = True
    max_halvings: int = 20
    degree: int = asm.OPERATOR_DEGREE
    linear: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class StateSolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False


def state_residual(mesh: TriMesh, coeff: PC1Coeff, b_field, y, rhs: np.ndarray,
                   degree: int = asm.OPERATOR_DEGREE) -> np.ndarray:
    """A(y) y - F, with boundary rows holding the boundary values of y."""
    A = asm.stiffness_weighted(mesh, coeff, b_field, y, degree)
    r = A @ y - rhs
    return r


def solve_state(mesh: TriMesh, coeff: PC1Coeff, b_field, u, opts: NewtonOptions | None = None,
                y0=None):
    """Newton's method for  int (b + a(y)) grad y . grad v = int u v  on V_h.

    Each step solves  D(y) delta = -residual.  Returns (y, report); a failed
    solve returns the last iterate with ``report.converged`` false.
    """
    opts = opts or NewtonOptions()
    rhs = asm.load(mesh, u, opts.degree)
    y = np.zeros(mesh.n_vertices) if y0 is None else asm.apply_dirichlet_rhs(mesh, y0)
    rep = StateSolveReport()
    fnorm = np.linalg.norm(rhs)
    r = state_residual(mesh, coeff, b_field, y, rhs, opts.degree)
    rn = np.linalg.norm(r)
    rep.residual_history.append(rn)
    while True:
        if rn <= opts.rtol * fnorm:
            rep.converged = True
            break
        if rep.iterations >= opts.max_iter:
            log.warning("state Newton did not converge: residual %.3e", rn)
            break
        D = asm.dh_operator(mesh, coeff, b_field, y, opts.degree)
        delta = solve(D, -r, opts.linear)
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            y_try = y + step * delta
            r_try = state_residual(mesh, coeff, b_field, y_try, rhs, opts.degree)
            rn_try = np.linalg.norm(r_try)
            if not opts.damping or rn_try < rn:
                break
            step *= 0.5
        else:
            log.warning("damping exhausted at residual %.3e", rn)
        y, r, rn = y_try, r_try, rn_try
        rep.iterations += 1
        rep.residual_history.append(rn)
    return y, rep


def solve_linearized(mesh: TriMesh, coeff: PC1Coeff, b_field, y, v,
                     degree: int = asm.OPERATOR_DEGREE, opts: SolverOptions | None = None) -> np.ndarray:
    """z solving D(y) z = load(v): the derivative of the discrete solution map in direction v."""
    D = asm.dh_operator(mesh, coeff, b_field, y, degree)
    return solve(D, asm.load(mesh, v, degree), opts)


def adjoint_matrix(mesh: TriMesh, coeff: PC1Coeff, b_field, y, degree: int = asm.OPERATOR_DEGREE):
    return transpose(asm.dh_operator(mesh, coeff, b_field, y, degree))


def solve_adjoint(mesh: TriMesh, coeff: PC1Coeff, b_field, y, rhs,
                  degree: int = asm.OPERATOR_DEGREE, rhs_degree: int | None = None,
                  opts: SolverOptions | None = None) -> np.ndarray:
    """phi solving D(y)^T phi = load(rhs)."""
    b = asm.load(mesh, rhs, degree if rhs_degree is None else rhs_degree)
    return solve(adjoint_matrix(mesh, coeff, b_field, y, degree), b, opts)


def dump_field(path, values) -> None:
    np.savetxt(path, np.asarray(values), fmt="%.17g")
