"""P1 finite element assembly on a TriMesh.

Element matrices are built for all triangles at once and summed into a cached
sparsity pattern with ``np.bincount``, which adds contributions in triangle
order.  Entries (i, j) and (j, i) therefore see the same summation order and
symmetric forms give bitwise symmetric matrices.

Fields are accepted in several shapes (see :func:`field_at_qp`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coeff import PC1Coeff
from .mesh import QuadRule, TriMesh, quad_rule

log = logging.getLogger(__name__)

OPERATOR_DEGREE = 2
ERROR_DEGREE = 4


@dataclass
class FeFunction:
    """Nodal P1 coefficients on a mesh."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("nodal vector length does not match the mesh")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def in_vh(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary_mask] == 0.0))

    def at_quadrature(self, mesh: TriMesh, rule: QuadRule) -> np.ndarray:
        if mesh is not self.mesh:
            raise ValueError("field lives on a different mesh")
        return mesh.at_qp(self.values, rule)

    def grad(self) -> np.ndarray:
        return self.mesh.grad_field(self.values)


def nodal(y, mesh: TriMesh) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (mesh.n_vertices,):
        raise ValueError("expected a nodal vector")
    return y


def field_at_qp(mesh: TriMesh, f, rule: QuadRule) -> np.ndarray:
    """Evaluate ``f`` at the quadrature points of every triangle, shape (nt, nq).

    ``f`` may be a scalar, an object with ``at_quadrature(mesh, rule)``, a
    callable ``f(x1, x2)``, a nodal vector, a per-triangle constant vector, or
    an (nt, nq) array already sampled at ``rule``.
    """
    nt, nq = mesh.n_triangles, rule.n
    if np.isscalar(f):
        return np.full((nt, nq), float(f))
    if hasattr(f, "at_quadrature"):
        return f.at_quadrature(mesh, rule)
    if callable(f):
        X = mesh.quad_points(rule)
        return np.broadcast_to(np.asarray(f(X[..., 0], X[..., 1]), dtype=float), (nt, nq))
    arr = np.asarray(f, dtype=float)
    if arr.shape == (mesh.n_vertices,):
        return mesh.at_qp(arr, rule)
    if arr.shape == (nt,):
        return np.repeat(arr[:, None], nq, axis=1)
    if arr.shape == (nt, nq):
        return arr
    raise ValueError(f"cannot evaluate field of shape {arr.shape} at quadrature points")


def integrate(mesh: TriMesh, f, degree: int = ERROR_DEGREE) -> float:
    rule = quad_rule(degree)
    vals = field_at_qp(mesh, f, rule)
    return float(np.sum(mesh.areas * (vals @ rule.weights)))


def l2_norm(mesh: TriMesh, f, degree: int = ERROR_DEGREE) -> float:
    rule = quad_rule(degree)
    vals = field_at_qp(mesh, f, rule)
    return float(np.sqrt(np.sum(mesh.areas * ((vals ** 2) @ rule.weights))))


# ---------------------------------------------------------------- sparsity

def _pattern(mesh: TriMesh):
    if "pattern" not in mesh._cache:
        n = mesh.n_vertices
        T = mesh.triangles
        rows = np.repeat(T[:, :, None], 3, axis=2).ravel()
        cols = np.repeat(T[:, None, :], 3, axis=1).ravel()
        keys, inv = np.unique(rows * n + cols, return_inverse=True)
        r, c = keys // n, keys % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        indptr = np.cumsum(indptr)
        bnd = mesh.boundary_mask
        constrained = bnd[r] | bnd[c]
        bdiag = bnd[r] & (r == c)
        mesh._cache["pattern"] = (indptr, c, inv.ravel(), constrained, bdiag)
    return mesh._cache["pattern"]


def assemble_local(mesh: TriMesh, local: np.ndarray, dirichlet: bool = True,
                   bc_diag: float = 1.0) -> sp.csr_matrix:
    """Sum element matrices ``local[t, i, j]`` (row = test i, col = trial j).

    With ``dirichlet`` the rows and columns of boundary vertices are replaced by
    ``bc_diag`` on the diagonal (identity by default, 0 for off-diagonal blocks).
    """
    indptr, indices, inv, constrained, bdiag = _pattern(mesh)
    data = np.bincount(inv, weights=local.ravel(), minlength=len(indices))
    if dirichlet:
        data[constrained] = 0.0
        data[bdiag] = bc_diag
    A = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(mesh.n_vertices,) * 2)
    A.eliminate_zeros()
    return A


def apply_dirichlet_rhs(mesh: TriMesh, vec: np.ndarray, values=0.0) -> np.ndarray:
    vec = np.array(vec, dtype=float)
    vec[mesh.boundary_mask] = values
    return vec


# ---------------------------------------------------------------- operators

def _weighted_qp_sum(mesh, rule, weight_qp):
    """area * sum_q w_q c_q per triangle."""
    return mesh.areas * (weight_qp @ rule.weights)


def stiffness_from_weight(mesh: TriMesh, weight_qp: np.ndarray, rule: QuadRule,
                          dirichlet: bool = True) -> sp.csr_matrix:
    G = mesh.gradients
    gg = np.einsum("tid,tjd->tij", G, G)
    local = _weighted_qp_sum(mesh, rule, weight_qp)[:, None, None] * gg
    return assemble_local(mesh, local, dirichlet)


def diffusion_weight(mesh: TriMesh, coeff: PC1Coeff, b_field, y, rule: QuadRule) -> np.ndarray:
    yq = mesh.at_qp(nodal(y, mesh), rule)
    return field_at_qp(mesh, b_field, rule) + coeff.eval(yq)


def stiffness_weighted(mesh: TriMesh, coeff: PC1Coeff, b_field, y,
                       degree: int = OPERATOR_DEGREE) -> sp.csr_matrix:
    """Matrix of  (w, z) -> int (b + a(y)) grad w . grad z."""
    rule = quad_rule(degree)
    return stiffness_from_weight(mesh, diffusion_weight(mesh, coeff, b_field, y, rule), rule)


def kink_hits(mesh: TriMesh, coeff: PC1Coeff, y, degree: int = OPERATOR_DEGREE) -> int:
    """Number of quadrature points at which y equals the kink exactly."""
    yq = mesh.at_qp(nodal(y, mesh), quad_rule(degree))
    return int(np.count_nonzero(yq == coeff.kink))


def active_slope(coeff: PC1Coeff, yq: np.ndarray) -> np.ndarray:
    """1_{y != kink} a'(y) at sample values."""
    return np.where(yq != coeff.kink, coeff.deriv(yq), 0.0)


def coupling_block(mesh: TriMesh, coeff: PC1Coeff, y, degree: int = OPERATOR_DEGREE,
                   dirichlet: bool = True) -> sp.csr_matrix:
    """Matrix of  (w, z) -> int 1_{y != kink} a'(y) w grad y . grad z."""
    rule = quad_rule(degree)
    y = nodal(y, mesh)
    yq = mesh.at_qp(y, rule)
    hits = np.count_nonzero(yq == coeff.kink)
    if hits:
        log.debug("%d quadrature points exactly at the kink", hits)
    s = active_slope(coeff, yq)  # (nt, nq)
    gy = mesh.grad_field(y)  # (nt, 2)
    gy_gi = np.einsum("td,tid->ti", gy, mesh.gradients)  # grad y . grad phi_i
    # sum_q w_q s_q lambda_j(q)
    sl = np.einsum("q,tq,qj->tj", rule.weights, s, rule.points)
    local = mesh.areas[:, None, None] * gy_gi[:, :, None] * sl[:, None, :]
    return assemble_local(mesh, local, dirichlet, bc_diag=0.0)


def dh_operator(mesh: TriMesh, coeff: PC1Coeff, b_field, y,
                degree: int = OPERATOR_DEGREE) -> sp.csr_matrix:
    """Linearized state operator: weighted stiffness plus the nonsymmetric coupling."""
    return (stiffness_weighted(mesh, coeff, b_field, y, degree)
            + coupling_block(mesh, coeff, y, degree)).tocsr()


def weighted_mass(mesh: TriMesh, weight_qp, rule: QuadRule, dirichlet: bool = True,
                  bc_diag: float = 1.0) -> sp.csr_matrix:
    """Matrix of (w, z) -> int c w z with c sampled at the quadrature points."""
    c = field_at_qp(mesh, weight_qp, rule)
    L = rule.points
    local = mesh.areas[:, None, None] * np.einsum("q,tq,qi,qj->tij", rule.weights, c, L, L)
    return assemble_local(mesh, local, dirichlet, bc_diag)


def mass(mesh: TriMesh, dirichlet: bool = False) -> sp.csr_matrix:
    """P1 mass matrix (degree-2 quadrature is exact)."""
    return weighted_mass(mesh, 1.0, quad_rule(2), dirichlet)


def load(mesh: TriMesh, f, degree: int = OPERATOR_DEGREE) -> np.ndarray:
    """Vector of int f phi_i with boundary entries zeroed."""
    rule = quad_rule(degree)
    fq = field_at_qp(mesh, f, rule)
    local = mesh.areas[:, None] * ((fq * rule.weights) @ rule.points)  # (nt, 3)
    vec = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return apply_dirichlet_rhs(mesh, vec)


def adjoint_curvature_block(mesh: TriMesh, coeff: PC1Coeff, y, phi,
                            degree: int = OPERATOR_DEGREE) -> sp.csr_matrix:
    """Derivative in y of  phi -> D(y)^T phi  (kink jump of a' omitted).

    Entry (i, j) collects
        int 1 a'(y)  lambda_j grad phi . grad phi_i
      + int 1 a''(y) lambda_j lambda_i grad y . grad phi
      + int 1 a'(y)  lambda_i grad phi_j . grad phi
    """
    rule = quad_rule(degree)
    y, phi = nodal(y, mesh), nodal(phi, mesh)
    yq = mesh.at_qp(y, rule)
    off = yq != coeff.kink
    s1 = np.where(off, coeff.deriv(yq), 0.0)
    s2 = np.where(off, coeff.second_branchwise(yq), 0.0)
    G = mesh.gradients
    gy, gp = mesh.grad_field(y), mesh.grad_field(phi)
    gp_gi = np.einsum("td,tid->ti", gp, G)
    L, w = rule.points, rule.weights
    s1l = np.einsum("q,tq,qj->tj", w, s1, L)
    k1 = gp_gi[:, :, None] * s1l[:, None, :]
    k3 = s1l[:, :, None] * gp_gi[:, None, :]
    k2 = np.einsum("q,tq,qi,qj->tij", w, s2, L, L) * np.einsum("td,td->t", gy, gp)[:, None, None]
    local = mesh.areas[:, None, None] * (k1 + k2 + k3)
    return assemble_local(mesh, local, dirichlet=True, bc_diag=0.0)


def l2_projection(mesh: TriMesh, f, degree: int = ERROR_DEGREE) -> np.ndarray:
    """L2 projection of f onto V_h (zero boundary values)."""
    from .sparse import solve

    return solve(mass(mesh, dirichlet=True), load(mesh, f, degree))
