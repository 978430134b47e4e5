"""Discrete optimal control: reduced objective, adjoint gradient and semismooth Newton.

Two control discretizations are supported.  In the variational one the control
is never stored; it is the box projection of -phi_h / nu evaluated wherever a
quadrature rule asks for it.  In the piecewise-constant one the control is one
value per triangle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .coeff import PC1Coeff
from .mesh import QuadRule, TriMesh, quad_rule
from .pde import NewtonOptions, solve_adjoint, solve_state
from .sparse import SolverOptions, solve

log = logging.getLogger(__name__)


def project_box(v, alpha: float, beta: float):
    if alpha > beta:
        raise ValueError("empty box: alpha > beta")
    out = np.minimum(beta, np.maximum(alpha, v))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------- problem data

@dataclass(frozen=True)
class TrackingCost:
    """L(x, y) = (y - y_d(x))^2 / 2.

    Cost integrands are evaluated on quadrature samples: every method takes the
    mesh, the rule and the state values ``yq`` at that rule's points.
    ``y_d`` may be anything :func:`assembly.field_at_qp` accepts, including a
    nodal interpolant.
    """

    y_d: object = 0.0

    def value(self, mesh, rule, yq):
        return 0.5 * (yq - asm.field_at_qp(mesh, self.y_d, rule)) ** 2

    def dy(self, mesh, rule, yq):
        return yq - asm.field_at_qp(mesh, self.y_d, rule)

    def dyy(self, mesh, rule, yq):
        return np.ones_like(yq)


@dataclass(frozen=True)
class OcpSpec:
    nu: float
    alpha: float
    beta: float
    coeff: PC1Coeff
    b_field: object = 1.0
    y_d: object = 0.0
    cost: object = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.alpha > self.beta:
            raise ValueError("need alpha <= beta")
        if self.cost is None:
            object.__setattr__(self, "cost", TrackingCost(self.y_d))

    def with_nu(self, nu: float) -> "OcpSpec":
        return replace(self, nu=nu)

    def on_mesh(self, mesh: TriMesh) -> "OcpSpec":
        """Copy with y_d replaced by its nodal interpolant on ``mesh``.

        Tracking terms then become polynomial on each triangle and every
        quadrature rule of degree >= 2 integrates them exactly.
        """
        if not callable(self.y_d) or not isinstance(self.cost, TrackingCost):
            return self
        yd_h = asm.FeFunction(mesh, mesh.interpolate(self.y_d))
        return replace(self, y_d=yd_h, cost=TrackingCost(yd_h))


@dataclass
class SsnOptions:
    rtol: float = 1e-10
    max_iter: int = 30
    damping: bool = True
    max_halvings: int = 20
    degree: int = asm.OPERATOR_DEGREE  # operators and control load
    cost_degree: int = asm.ERROR_DEGREE  # tracking term and its derivatives
    linear: SolverOptions = field(default_factory=SolverOptions)


def _cost_qp(mesh: TriMesh, rule: QuadRule, fn, y):
    yq = mesh.at_qp(asm.nodal(y, mesh), rule)
    return np.broadcast_to(fn(mesh, rule, yq), yq.shape)


# ---------------------------------------------------------------- controls

@dataclass
class VariationalControl:
    """u_h = Proj_[alpha, beta](-phi_h / nu), evaluated pointwise."""

    mesh: TriMesh
    phi: np.ndarray
    nu: float
    alpha: float
    beta: float

    def raw(self, phi_vals):
        return -phi_vals / self.nu

    def at_quadrature(self, mesh: TriMesh, rule: QuadRule) -> np.ndarray:
        return project_box(self.raw(mesh.at_qp(self.phi, rule)), self.alpha, self.beta)

    def at_vertices(self) -> np.ndarray:
        return project_box(self.raw(self.phi), self.alpha, self.beta)

    def inactive_qp(self, rule: QuadRule) -> np.ndarray:
        v = self.raw(self.mesh.at_qp(self.phi, rule))
        return (v >= self.alpha) & (v <= self.beta)


@dataclass
class PiecewiseConstantControl:
    """u_T = Proj(-mean_T(phi_h) / nu) on every triangle."""

    mesh: TriMesh
    phi: np.ndarray
    nu: float
    alpha: float
    beta: float

    def raw(self) -> np.ndarray:
        return -self.phi[self.mesh.triangles].mean(axis=1) / self.nu

    @property
    def values(self) -> np.ndarray:
        return project_box(self.raw(), self.alpha, self.beta)

    def at_quadrature(self, mesh: TriMesh, rule: QuadRule) -> np.ndarray:
        return np.repeat(self.values[:, None], rule.n, axis=1)

    def inactive(self) -> np.ndarray:
        v = self.raw()
        return (v >= self.alpha) & (v <= self.beta)


@dataclass
class OcpSolution:
    y: np.ndarray
    phi: np.ndarray
    control: object
    ssn_iterations: int
    active_set_history: list
    residual_history: list
    converged: bool

    def control_samples(self, rule: QuadRule):
        """(x1, x2, u) at the quadrature points of every triangle."""
        X = self.control.mesh.quad_points(rule)
        u = asm.field_at_qp(self.control.mesh, self.control, rule)
        return np.column_stack([X[..., 0].ravel(), X[..., 1].ravel(), u.ravel()])


# ---------------------------------------------------------------- reduced functional

def objective(spec: OcpSpec, mesh: TriMesh, u, opts: NewtonOptions | None = None,
              cost_degree: int = asm.ERROR_DEGREE, y0=None) -> float:
    opts = opts or NewtonOptions()
    y, rep = solve_state(mesh, spec.coeff, spec.b_field, u, opts, y0=y0)
    if not rep.converged:
        raise RuntimeError("state solve did not converge")
    rule = quad_rule(cost_degree)
    track = np.sum(mesh.areas * (_cost_qp(mesh, rule, spec.cost.value, y) @ rule.weights))
    uq = asm.field_at_qp(mesh, u, rule)
    reg = 0.5 * spec.nu * np.sum(mesh.areas * ((uq ** 2) @ rule.weights))
    return float(track + reg)


@dataclass
class GradientField:
    """phi_h(u) + nu u as a field; ``dot`` pairs it with a direction."""

    mesh: TriMesh
    phi: np.ndarray
    y: np.ndarray
    u: object
    nu: float
    degree: int = asm.OPERATOR_DEGREE
    cost_degree: int = asm.ERROR_DEGREE

    def at_quadrature(self, mesh: TriMesh, rule: QuadRule) -> np.ndarray:
        return mesh.at_qp(self.phi, rule) + self.nu * asm.field_at_qp(mesh, self.u, rule)

    def dot(self, v) -> float:
        """Exact derivative of the discrete objective in direction v."""
        # phi pairs with v through the control load rule; the nu-term uses the cost rule
        pv = float(self.phi @ asm.load(self.mesh, v, self.degree))
        rule = quad_rule(self.cost_degree)
        uv = asm.field_at_qp(self.mesh, self.u, rule) * asm.field_at_qp(self.mesh, v, rule)
        return pv + self.nu * float(np.sum(self.mesh.areas * (uv @ rule.weights)))


def gradient_field(spec: OcpSpec, mesh: TriMesh, u, opts: NewtonOptions | None = None,
                   cost_degree: int = asm.ERROR_DEGREE) -> GradientField:
    opts = opts or NewtonOptions()
    y, rep = solve_state(mesh, spec.coeff, spec.b_field, u, opts)
    if not rep.converged:
        raise RuntimeError("state solve did not converge")
    rule = quad_rule(cost_degree)
    dL = _cost_qp(mesh, rule, spec.cost.dy, y)
    phi = solve_adjoint(mesh, spec.coeff, spec.b_field, y, dL, opts.degree, rhs_degree=cost_degree)
    return GradientField(mesh, phi, y, u, spec.nu, opts.degree, cost_degree)


# ---------------------------------------------------------------- semismooth Newton

def _pc_load(mesh: TriMesh, u_T: np.ndarray) -> np.ndarray:
    local = np.repeat((mesh.areas * u_T / 3.0)[:, None], 3, axis=1)
    vec = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return asm.apply_dirichlet_rhs(mesh, vec)


class _System:
    """Residual and generalized Jacobian of the coupled state/adjoint system."""

    def __init__(self, spec: OcpSpec, mesh: TriMesh, opts: SsnOptions, control: str):
        self.spec, self.mesh, self.opts, self.kind = spec, mesh, opts, control
        self.rule = quad_rule(opts.degree)
        self.cost_rule = quad_rule(opts.cost_degree)
        self.n = mesh.n_vertices

    def control(self, phi):
        s = self.spec
        cls = VariationalControl if self.kind == "variational" else PiecewiseConstantControl
        return cls(self.mesh, phi, s.nu, s.alpha, s.beta)

    def residual(self, y, phi):
        s, m = self.spec, self.mesh
        ctrl = self.control(phi)
        A = asm.stiffness_weighted(m, s.coeff, s.b_field, y, self.opts.degree)
        if self.kind == "variational":
            f = asm.load(m, ctrl, self.opts.degree)
        else:
            f = _pc_load(m, ctrl.values)
        F1 = A @ y - f
        D = A + asm.coupling_block(m, s.coeff, y, self.opts.degree)
        dL = _cost_qp(m, self.cost_rule, s.cost.dy, y)
        F2 = D.T @ phi - asm.load(m, dL, self.opts.cost_degree)
        return np.concatenate([F1, F2]), D, ctrl

    def jacobian(self, y, phi, D, ctrl):
        s, m = self.spec, self.mesh
        if self.kind == "variational":
            inact = ctrl.inactive_qp(self.rule).astype(float)
            MI = asm.weighted_mass(m, inact, self.rule, bc_diag=0.0) / s.nu
            n_active = int(inact.size - inact.sum())
        else:
            inact = ctrl.inactive().astype(float)
            local = np.repeat((m.areas * inact / 9.0)[:, None], 9, axis=1).reshape(-1, 3, 3)
            MI = asm.assemble_local(m, local, dirichlet=True, bc_diag=0.0) / s.nu
            n_active = int(inact.size - inact.sum())
        K = asm.adjoint_curvature_block(m, s.coeff, y, phi, self.opts.degree)
        Lyy = _cost_qp(m, self.cost_rule, s.cost.dyy, y)
        ML = asm.weighted_mass(m, Lyy, self.cost_rule, bc_diag=0.0)
        J = sp.bmat([[D, MI], [K - ML, D.T]], format="csc")
        return J, n_active


def ssn_solve(spec: OcpSpec, mesh: TriMesh, y0=None, phi0=None, opts: SsnOptions | None = None,
              control: str = "variational") -> OcpSolution:
    """Semismooth Newton on the discrete optimality system.

    Unknowns are the nodal state and adjoint.  The control is eliminated
    through the projection formula (``control="variational"``) or its
    per-triangle analogue (``control="piecewise_constant"``).
    """
    opts = opts or SsnOptions()
    n = mesh.n_vertices
    y = np.zeros(n) if y0 is None else asm.apply_dirichlet_rhs(mesh, y0)
    phi = np.zeros(n) if phi0 is None else asm.apply_dirichlet_rhs(mesh, phi0)
    system = _System(spec, mesh, opts, control)
    F, D, ctrl = system.residual(y, phi)
    rn = np.linalg.norm(F)
    residuals, actives = [rn], []
    it, converged = 0, False
    while True:
        if rn <= opts.rtol:
            converged = True
            break
        if it >= opts.max_iter:
            log.warning("SSN stopped after %d iterations at residual %.3e", it, rn)
            break
        J, n_active = system.jacobian(y, phi, D, ctrl)
        actives.append(n_active)
        delta = solve(J, -F, opts.linear)
        dy, dphi = delta[:n], delta[n:]
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            y_try, phi_try = y + step * dy, phi + step * dphi
            F_try, D_try, ctrl_try = system.residual(y_try, phi_try)
            rn_try = np.linalg.norm(F_try)
            if not opts.damping or rn_try < rn:
                break
            step *= 0.5
        y, phi, F, D, ctrl, rn = y_try, phi_try, F_try, D_try, ctrl_try, rn_try
        it += 1
        residuals.append(rn)
        log.info("SSN it %d: residual %.3e, step %.3g, active %d", it, rn, step, n_active)
    return OcpSolution(y, phi, system.control(phi), it, actives, residuals, converged)


def solve_pc_control(spec: OcpSpec, mesh: TriMesh, opts: SsnOptions | None = None,
                     y0=None, phi0=None) -> OcpSolution:
    """Optimal piecewise-constant control via semismooth Newton on (y, phi)."""
    return ssn_solve(spec, mesh, y0, phi0, opts, control="piecewise_constant")


def vi_residual(sol: OcpSolution, rule: QuadRule | None = None) -> float:
    """Largest violation of the pointwise first-order conditions.

    At a carrier with u = alpha the gradient phi + nu u must be >= 0, with
    u = beta it must be <= 0, and strictly inside it must vanish.
    """
    ctrl = sol.control
    m = ctrl.mesh
    if isinstance(ctrl, PiecewiseConstantControl):
        g = sol.phi[m.triangles].mean(axis=1) + ctrl.nu * ctrl.values
        u = ctrl.values
    else:
        rule = rule or quad_rule(asm.OPERATOR_DEGREE)
        u = ctrl.at_quadrature(m, rule)
        g = m.at_qp(sol.phi, rule) + ctrl.nu * u
    at_lo, at_hi = u == ctrl.alpha, u == ctrl.beta
    viol = np.where(at_lo & ~at_hi, np.maximum(-g, 0.0),
                    np.where(at_hi & ~at_lo, np.maximum(g, 0.0),
                             np.where(at_lo & at_hi, 0.0, np.abs(g))))
    return float(viol.max(initial=0.0))
