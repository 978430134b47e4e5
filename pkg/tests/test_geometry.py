import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from qlocp import assembly as asm
from qlocp import geometry as geo
from qlocp.coeff import PC1Coeff
from qlocp.harness import example_spec, exact_example
from qlocp.mesh import uniform_unit_square

PI = np.pi


def sigma_r_sinsin(t, r):
    """Closed-form sigma_r of sin(pi x1) sin(pi x2) with sigma0 = 1 (four equal quadrants)."""
    A = lambda s: np.arcsin(min(max(s, -1.0), 1.0))  # noqa: E731
    if t == 1.0:
        a = A(1 - r)
        return 4 / r * ((2 / PI) * (np.cos(a) + (1 - r) * a) + r - 1)
    quarter = (-(2 / PI) * (np.cos(A(t + r)) - np.cos(A(t - r)))
               - (2 / PI) * (t - r) * (A(t + r) - A(t - r)) + 2 * r * (1 - (2 / PI) * A(t + r)))
    return 4 * quarter / r


def peak_band_measure(r):
    """meas{sin sin > 1 - r} by one-dimensional quadrature."""
    lo = np.arcsin(1 - r) / PI
    f = lambda x2: 1 - (2 / PI) * np.arcsin((1 - r) / np.sin(PI * x2))  # noqa: E731
    return quad(f, lo, 1 - lo, epsabs=1e-14, epsrel=1e-12)[0]


def test_constant_field_has_zero_band_functional():
    assert geo.band_functional(geo.affine(0.5, 0, 0), 0.5, 0.1, 1.0) == 0.0
    assert geo.band_functional(geo.affine(0.7, 0, 0), 0.5, 0.1, 1.0) == 0.0


def test_strip_band_functional_and_sigma():
    f = geo.affine(0.0, 1.0, 0.0)
    assert geo.band_functional(f, 0.5, 0.1, 1.0) == pytest.approx(0.2, abs=1e-12)
    for r in (0.05, 0.01):
        assert geo.sigma_r(f, 0.5, r, 1.0) == pytest.approx(2.0, abs=1e-10)
    assert geo.sigma_r(f, 0.5, 0.1, 0.0) == 0.0


def test_strip_on_fe_field():
    mesh = uniform_unit_square(10)
    fe = asm.FeFunction(mesh, mesh.vertices[:, 0].copy())
    assert geo.band_functional(fe, 0.5, 0.1, 1.0) == pytest.approx(0.2, abs=1e-12)
    assert geo.band_measure(fe, 0.5, 0.1) == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("t", [0.3, 0.5, 0.8, 1.0])
@pytest.mark.parametrize("r", [0.05, 0.004])
def test_sigma_r_matches_closed_form(t, r):
    got = geo.sigma_r(geo.sinsin(), t, r, 1.0)
    # the band edge around the quadratic peak is resolved less sharply
    assert got == pytest.approx(sigma_r_sinsin(t, r), rel=1e-3 if t == 1.0 else 1e-4)


def test_sigma_linear_in_sigma0():
    f = geo.sinsin()
    assert geo.sigma_r(f, 0.4, 0.02, 2.0) == 2.0 * geo.sigma_r(f, 0.4, 0.02, 1.0)


def test_band_functional_monotone_in_r():
    f = geo.sinsin()
    vals = [geo.band_functional(f, 0.6, r, 1.0) for r in (0.01, 0.02, 0.04, 0.08)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_estimate_sigma_half():
    est = geo.estimate_sigma(geo.sinsin(), 0.5, 1.0)
    assert not est.blowup
    assert est.limit == pytest.approx(16 / 3, rel=1e-4)
    assert len(est.values) == len(est.radii) == 7


def test_estimate_sigma_at_peak_tends_to_zero():
    est = geo.estimate_sigma(geo.sinsin(), 1.0, 1.0)
    assert est.method == "aitken"
    assert est.limit < 1e-3


def test_estimate_sigma_sqrt_tail(monkeypatch):
    monkeypatch.setattr(geo, "sigma_r", lambda y, t, r, s0, **kw: 2.5 + 3.0 * np.sqrt(r))
    est = geo.estimate_sigma(None, 0.5, 1.0)
    assert est.method == "aitken"
    assert est.limit == pytest.approx(2.5, rel=1e-10)


def test_estimate_sigma_linear_tail(monkeypatch):
    monkeypatch.setattr(geo, "sigma_r", lambda y, t, r, s0, **kw: 4.0 - 7.0 * r)
    est = geo.estimate_sigma(None, 0.5, 1.0)
    assert est.method == "linear"
    assert est.limit == pytest.approx(4.0, rel=1e-12)


def test_estimate_sigma_input_checks():
    with pytest.raises(ValueError):
        geo.estimate_sigma(geo.sinsin(), 0.5, 1.0, radii=[0.1, 0.05])
    with pytest.raises(ValueError):
        geo.estimate_sigma(geo.sinsin(), 0.5, 1.0, radii=[0.1, 0.2, 0.05])
    with pytest.raises(ValueError):
        geo.band_functional(geo.sinsin(), 0.5, 0.0, 1.0)


def test_estimate_sigma_flags_blowup(monkeypatch):
    monkeypatch.setattr(geo, "sigma_r", lambda y, t, r, s0, **kw: r ** -0.5)
    est = geo.estimate_sigma(None, 0.5, 1.0)
    assert est.blowup and est.limit == np.inf


def test_sigma_exact_values():
    assert geo.sigma_sinsin_exact(0.0) == 4.0
    assert geo.sigma_sinsin_exact(1.0) == 0.0
    assert geo.sigma_sinsin_exact(0.5) == pytest.approx(16 / 3)
    with pytest.raises(ValueError):
        geo.sigma_sinsin_exact(1.5)


def test_band_measure_examples():
    assert geo.band_measure(geo.affine(0.5, 0, 0), 0.5, 0.01) == pytest.approx(1.0, abs=1e-14)
    assert geo.band_measure(geo.affine(0.0, 1.0, 0.0), 0.5, 0.1) == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("r", [1e-2, 1e-3])
def test_band_measure_at_peak(r):
    got = geo.band_measure(geo.sinsin(), 1.0, r)
    assert got == pytest.approx(peak_band_measure(r), rel=1e-3)
    assert got / r <= 8 / PI ** 2


# ---------------------------------------------------------------- level sets

def test_level_segments_empty_below():
    mesh = uniform_unit_square(4)
    assert geo.level_segments(np.zeros(mesh.n_vertices), 0.5, mesh) == []


@pytest.mark.parametrize("m", [4, 5])
def test_level_segments_vertical_line(m):
    mesh = uniform_unit_square(m)
    segs = geo.level_segments(asm.FeFunction(mesh, mesh.vertices[:, 0].copy()), 0.5)
    assert geo.total_length(segs) == pytest.approx(1.0, abs=1e-12)
    for s in segs:
        assert s.start[0] == pytest.approx(0.5) and s.end[0] == pytest.approx(0.5)


def test_level_segment_along_edge_is_degenerate():
    mesh = uniform_unit_square(1)
    # triangle 0 is [(0,0), (1,0), (1,1)]
    y = np.array([0.0, 1.0, 0.0, 1.0])
    segs = [s for s in geo.level_segments(y, 1.0, mesh) if s.tri == 0]
    assert len(segs) == 1 and segs[0].degenerate
    ends = {tuple(segs[0].start), tuple(segs[0].end)}
    assert ends == {(1.0, 0.0), (1.0, 1.0)}


def test_flat_triangle_contributes_edges():
    mesh = uniform_unit_square(1)
    segs = geo.level_segments(np.ones(4), 1.0, mesh)
    assert all(s.degenerate for s in segs)
    assert all(np.allclose(s.grad, 0.0) for s in segs)


@given(st.one_of(st.just(0.0), st.floats(1e-3, 2), st.floats(-2, -1e-3)), st.floats(0.2, 2),
       st.floats(-2, 2), st.integers(2, 9))
@settings(max_examples=30, deadline=None)
def test_affine_level_length(c1, c2, t, m):
    # the level set of c1 x1 + c2 x2 is the line x2 = (t - c1 x1) / c2 clipped to the square
    mesh = uniform_unit_square(m)
    y = c1 * mesh.vertices[:, 0] + c2 * mesh.vertices[:, 1]
    if c1 == 0.0:
        lo, hi = (0.0, 1.0) if 0.0 <= t / c2 <= 1.0 else (0.0, 0.0)
    else:
        ends = sorted([t / c1, (t - c2) / c1])  # x1 where x2 hits 0 and 1
        lo, hi = max(ends[0], 0.0), min(ends[1], 1.0)
    exact = max(hi - lo, 0.0) * np.hypot(1.0, c1 / c2)
    got = geo.total_length(geo.level_segments(y, t, mesh))
    assert got == pytest.approx(exact, abs=1e-12)


# ---------------------------------------------------------------- curvature

def test_q2_affine_oracle():
    mesh = uniform_unit_square(4)
    x = mesh.vertices[:, 0].copy()
    q = geo.q2_line_integral(asm.FeFunction(mesh, x), x, np.ones_like(x), PC1Coeff.max_type(0.5))
    assert q == pytest.approx(-0.5, abs=1e-12)


def test_q2_zero_direction():
    mesh = uniform_unit_square(4)
    x = mesh.vertices[:, 0].copy()
    assert geo.q2_line_integral(x, x, np.zeros_like(x), PC1Coeff.max_type(0.5), mesh) == 0.0


@given(st.floats(-10, 10))
@settings(max_examples=20, deadline=None)
def test_q2_quadratic_in_z(lam):
    mesh = uniform_unit_square(5)
    X = mesh.vertices
    y = 0.3 + X[:, 0] + 0.4 * X[:, 1]
    phi = np.sin(X[:, 0]) * X[:, 1]
    z = np.cos(3 * X[:, 1]) + X[:, 0]
    a = PC1Coeff.max_type(1.0)
    base = geo.q2_line_integral(y, phi, z, a, mesh)
    assert geo.q2_line_integral(y, phi, lam * z, a, mesh) == pytest.approx(lam ** 2 * base, rel=1e-13,
                                                                            abs=1e-300)


def test_q2_vanishes_at_isolated_peak():
    mesh = uniform_unit_square(20)
    y = mesh.interpolate(lambda a, b: exact_example("y", a, b))
    assert y.max() == 1.0
    phi = mesh.interpolate(lambda a, b: exact_example("phi", a, b))
    assert geo.total_length(geo.level_segments(y, 1.0, mesh)) == 0.0
    assert geo.q2_line_integral(y, phi, np.ones_like(y), PC1Coeff.max_type(1.0), mesh) == 0.0


def test_q_total_zero_direction():
    mesh = uniform_unit_square(8)
    spec = example_spec().on_mesh(mesh)
    y = mesh.interpolate(lambda a, b: 1.4 * exact_example("y", a, b))
    phi = mesh.interpolate(lambda a, b: exact_example("phi", a, b))
    q = geo.q_total(spec, mesh, y, phi, 0.0)
    assert q.smooth == q.first == q.second == q.total == 0.0


def test_q_total_with_zero_adjoint():
    mesh = uniform_unit_square(8)
    spec = example_spec().on_mesh(mesh)
    y = mesh.interpolate(lambda a, b: 1.4 * exact_example("y", a, b))
    v = lambda a, b: np.sin(PI * a) * b  # noqa: E731
    q = geo.q_total(spec, mesh, y, np.zeros(mesh.n_vertices), v)
    assert q.first == 0.0 and q.second == 0.0
    ref = 0.5 * asm.l2_norm(mesh, q.z) ** 2 + 0.5 * spec.nu * asm.l2_norm(mesh, v) ** 2
    assert q.total == pytest.approx(ref, rel=1e-13)


def test_q_total_nonsmooth_parts_active():
    # the state crosses the kink along a curve, so both nonsmooth parts are nonzero
    mesh = uniform_unit_square(16)
    spec = example_spec().on_mesh(mesh)
    y = mesh.interpolate(lambda a, b: 1.4 * exact_example("y", a, b))
    phi = mesh.interpolate(lambda a, b: -exact_example("y", a, b))
    q = geo.q_total(spec, mesh, y, phi, lambda a, b: np.sin(PI * a) * np.sin(PI * b))
    assert abs(q.first) > 1e-6 and abs(q.second) > 1e-6
