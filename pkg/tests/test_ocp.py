import numpy as np
import pytest
from hypothesis import given, strategies as st

from qlocp import assembly as asm
from qlocp.coeff import PC1Coeff
from qlocp.harness import example_spec, exact_example, ssn_start
from qlocp.mesh import quad_rule, uniform_unit_square
from qlocp.pde import solve_state
from qlocp.ocp import (OcpSpec, SsnOptions, VariationalControl, gradient_field, objective,
                       project_box, solve_pc_control, ssn_solve, vi_residual)

PI = np.pi
reals = st.floats(-1e3, 1e3, allow_nan=False)


def test_project_box_examples():
    assert project_box(-1.0, 0.0, 2 * PI ** 2) == 0.0
    assert project_box(5.0, 0.0, 2 * PI ** 2) == 5.0
    assert project_box(25.0, 0.0, 2 * PI ** 2) == 2 * PI ** 2
    with pytest.raises(ValueError):
        project_box(0.0, 1.0, 0.0)


@given(reals, reals, reals)
def test_project_box_idempotent_and_feasible(v, a, b):
    lo, hi = min(a, b), max(a, b)
    p = project_box(v, lo, hi)
    assert lo <= p <= hi
    assert project_box(p, lo, hi) == p


def test_spec_validation():
    a = PC1Coeff.max_type()
    with pytest.raises(ValueError):
        OcpSpec(nu=0.0, alpha=0.0, beta=1.0, coeff=a)
    with pytest.raises(ValueError):
        OcpSpec(nu=1.0, alpha=2.0, beta=1.0, coeff=a)
    assert OcpSpec(nu=1.0, alpha=1.0, beta=1.0, coeff=a).alpha == 1.0


def test_on_mesh_interpolates_desired_state():
    mesh = uniform_unit_square(4)
    spec = example_spec().on_mesh(mesh)
    assert isinstance(spec.y_d, asm.FeFunction)
    np.testing.assert_array_equal(spec.y_d.values,
                                  exact_example("y_d", mesh.vertices[:, 0], mesh.vertices[:, 1]))


def test_objective_at_zero_control():
    mesh = uniform_unit_square(16)
    spec = example_spec()
    yd = lambda x, y: exact_example("y_d", x, y)  # noqa: E731
    assert objective(spec, mesh, 0.0) == pytest.approx(0.5 * asm.l2_norm(mesh, yd) ** 2, rel=1e-14)


def test_objective_linear_in_nu():
    mesh = uniform_unit_square(12)
    spec = example_spec(1e-3)
    u = lambda x, y: 5 * x * y  # noqa: E731
    reg = 0.5 * 1e-3 * asm.l2_norm(mesh, u) ** 2
    diff = objective(spec.with_nu(2e-3), mesh, u) - objective(spec, mesh, u)
    assert diff == pytest.approx(reg, rel=1e-12)


def test_objective_at_exact_control_converges():
    nu = 1e-4
    u = lambda x, y: exact_example("u", x, y, nu)  # noqa: E731
    # |y - y_d| = 4 nu pi^4 |s| and |u| = 2 pi^2 |s| with |s|^2 = 1/4
    ref = 0.5 * (2 * nu * PI ** 4) ** 2 + 0.5 * nu * PI ** 4
    errs = [abs(objective(example_spec(nu), uniform_unit_square(m), u) - ref) for m in (24, 48)]
    assert errs[1] < 1e-2 * ref
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_gradient_matches_finite_differences():
    mesh = uniform_unit_square(16)
    spec = example_spec()
    u = lambda x, y: 3 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y)  # noqa: E731
    g = gradient_field(spec, mesh, u)
    rng = np.random.default_rng(7)
    for _ in range(3):
        c = rng.standard_normal(4)
        v = lambda x, y, c=c: (c[0] * np.sin(PI * x) * np.sin(2 * PI * y) + c[1] * x * y  # noqa: E731
                               + c[2] * np.cos(x - y) + c[3])
        s = 1e-5
        fd = (objective(spec, mesh, lambda x, y: u(x, y) + s * v(x, y))
              - objective(spec, mesh, lambda x, y: u(x, y) - s * v(x, y))) / (2 * s)
        assert g.dot(v) == pytest.approx(fd, rel=1e-5)


def test_gradient_vanishes_at_optimum():
    nu = 1e-4
    u = lambda x, y: exact_example("u", x, y, nu)  # noqa: E731
    norms = []
    for m in (24, 48):
        mesh = uniform_unit_square(m)
        norms.append(asm.l2_norm(mesh, gradient_field(example_spec(nu), mesh, u)))
    scale = nu * PI ** 2  # |nu u| in L2
    assert norms[1] < 0.05 * scale
    assert 3.5 < norms[0] / norms[1] < 4.5


@pytest.fixture(scope="module")
def small_solution():
    mesh = uniform_unit_square(24)
    spec = example_spec().on_mesh(mesh)
    sol = ssn_solve(spec, mesh, ssn_start(mesh), np.zeros(mesh.n_vertices))
    return mesh, spec, sol


def test_ssn_converges_monotonically(small_solution):
    _, _, sol = small_solution
    assert sol.converged
    assert sol.residual_history[-1] <= 1e-10
    assert all(b < a for a, b in zip(sol.residual_history, sol.residual_history[1:]))
    assert len(sol.active_set_history) == sol.ssn_iterations


def test_ssn_solution_feasible_and_stationary(small_solution):
    mesh, spec, sol = small_solution
    rule = quad_rule(4)
    u = sol.control.at_quadrature(mesh, rule)
    assert u.min() >= spec.alpha and u.max() <= spec.beta
    assert vi_residual(sol) <= 1e-8
    samples = sol.control_samples(rule)
    assert samples.shape == (mesh.n_triangles * rule.n, 3)


def test_ties_belong_to_inactive_set():
    mesh = uniform_unit_square(3)
    ctrl = VariationalControl(mesh, np.zeros(mesh.n_vertices), 1e-4, 0.0, 1.0)
    assert ctrl.inactive_qp(quad_rule(2)).all()


def test_degenerate_box_fixes_control():
    mesh = uniform_unit_square(10)
    spec = OcpSpec(nu=1e-2, alpha=3.0, beta=3.0, coeff=PC1Coeff.max_type(), y_d=1.0)
    sol = ssn_solve(spec, mesh)
    assert sol.converged and sol.ssn_iterations <= 2
    np.testing.assert_array_equal(sol.control.at_vertices(), 3.0)
    ref, _ = solve_state(mesh, spec.coeff, 1.0, 3.0)
    np.testing.assert_allclose(sol.y, ref, atol=1e-12)


def test_nonconvergence_flagged():
    mesh = uniform_unit_square(12)
    spec = example_spec().on_mesh(mesh)
    sol = ssn_solve(spec, mesh, ssn_start(mesh), None, SsnOptions(max_iter=1))
    assert not sol.converged


def test_piecewise_constant_control():
    mesh = uniform_unit_square(16)
    spec = example_spec().on_mesh(mesh)
    sol = solve_pc_control(spec, mesh, y0=ssn_start(mesh))
    assert sol.converged
    vals = sol.control.values
    assert vals.shape == (mesh.n_triangles,)
    assert vals.min() >= spec.alpha and vals.max() <= spec.beta
    assert vi_residual(sol) <= 1e-8


def test_piecewise_constant_degenerate_box():
    mesh = uniform_unit_square(8)
    spec = OcpSpec(nu=1e-2, alpha=-1.0, beta=-1.0, coeff=PC1Coeff.max_type(), y_d=0.5)
    sol = solve_pc_control(spec, mesh)
    assert sol.converged and sol.ssn_iterations <= 2
    np.testing.assert_array_equal(sol.control.values, -1.0)
