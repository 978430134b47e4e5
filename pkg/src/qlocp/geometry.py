"""Level-set functionals of a scalar field around the kink value.

Band integrals (the band functional, the scaled jump functional and the band
measure) integrate indicator-weighted integrands with a degree-4 rule on an
adaptively refined triangulation: triangles whose sampled range crosses an
edge of the band are split 4-way until they are small compared with the band
width, and the remaining edge leaves are cut exactly along the level lines of
their linear interpolant.  Refinement happens in barycentric coordinates of a
parent triangle, so analytic fields and P1 fields share the same machinery.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import assembly as asm
from .mesh import TriMesh, quad_rule, uniform_unit_square
from .pde import solve_linearized

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalyticField:
    """A closed-form field with closed-form gradient on the unit square."""

    value: Callable
    grad: Callable
    name: str = "analytic"


def sinsin() -> AnalyticField:
    pi = np.pi
    return AnalyticField(
        lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)),
        "sinsin",
    )


def affine(c0: float, c1: float, c2: float) -> AnalyticField:
    """c0 + c1 x1 + c2 x2."""
    return AnalyticField(
        lambda x, y: c0 + c1 * x + c2 * y + 0.0 * x * y,
        lambda x, y: (np.full(np.shape(x), float(c1)), np.full(np.shape(x), float(c2))),
        "affine",
    )


# ---------------------------------------------------------------- band quadrature

_CHILDREN = np.array([
    [[1, 0, 0], [.5, .5, 0], [.5, 0, .5]],
    [[.5, .5, 0], [0, 1, 0], [0, .5, .5]],
    [[.5, 0, .5], [0, .5, .5], [0, 0, 1]],
    [[.5, .5, 0], [0, .5, .5], [.5, 0, .5]],
])  # child vertex k as barycentric combination of parent vertices


@dataclass
class _Sampler:
    mesh: TriMesh
    fe: np.ndarray | None = None
    analytic: AnalyticField | None = None

    def __call__(self, parent, bary):
        """Values and gradients at barycentric points ``bary`` (k, p, 3) of triangles ``parent``."""
        m = self.mesh
        if self.fe is not None:
            vals = np.einsum("kpj,kj->kp", bary, self.fe[m.triangles[parent]])
            g = m.grad_field(self.fe)[parent]
            gx = np.broadcast_to(g[:, None, 0], vals.shape)
            gy = np.broadcast_to(g[:, None, 1], vals.shape)
            return vals, gx, gy
        P = m.vertices[m.triangles[parent]]  # (k, 3, 2)
        X = np.einsum("kpj,kjd->kpd", bary, P)
        vals = self.analytic.value(X[..., 0], X[..., 1])
        gx, gy = self.analytic.grad(X[..., 0], X[..., 1])
        return vals, gx, gy


def _sampler(y, base_m: int) -> _Sampler:
    if isinstance(y, AnalyticField):
        return _Sampler(uniform_unit_square(base_m), analytic=y)
    if isinstance(y, asm.FeFunction):
        return _Sampler(y.mesh, fe=y.values)
    raise TypeError("field must be an AnalyticField or a FeFunction")


def _linear_cdf(v: np.ndarray, c: float) -> np.ndarray:
    """Area fraction of each triangle where the linear interpolant of ``v`` (k, 3) is <= c."""
    v = np.sort(v, axis=1)
    v0, v1, v2 = v[:, 0], v[:, 1], v[:, 2]
    d10, d20, d21 = v1 - v0, v2 - v0, v2 - v1
    with np.errstate(divide="ignore", invalid="ignore"):
        low = np.where(d10 * d20 > 0, (c - v0) ** 2 / (d10 * d20), 0.0)
        high = 1.0 - (v2 - c) ** 2 / (d20 * d21)
    return np.where(c < v0, 0.0, np.where(c >= v2, 1.0, np.where(c <= v1, low, high)))


def _band_quadrature(sampler: _Sampler, lo: float, hi: float, integrand, weight,
                     leaf_size: float, max_level: int = 14):
    """Integrate ``integrand(vals, gx, gy)`` over the square, refining near the band edges.

    Triangles whose sampled value range (widened by a curvature margin for
    analytic fields) contains ``lo`` or ``hi`` are split 4-way until their
    diameter drops below ``leaf_size``.  Such edge leaves are then integrated
    as ``weight`` times the exact area fraction where the linear interpolant
    of the vertex values lies in (lo, hi); elsewhere the degree-4 rule applies
    to ``integrand``, which includes the band indicator.
    """
    mesh = sampler.mesh
    rule = quad_rule(4)
    probe = np.vstack([np.eye(3), rule.points])  # vertices + quadrature points
    parent = np.arange(mesh.n_triangles)
    B = np.repeat(np.eye(3)[None], mesh.n_triangles, axis=0)  # (k, 3, 3)
    diam = np.sqrt(2.0) / mesh.subdivisions
    level = 0
    total = 0.0
    analytic = sampler.analytic is not None
    while len(parent):
        pts = np.einsum("pj,kjl->kpl", probe, B)
        vals, gx, gy = sampler(parent, pts)
        qv, qgx, qgy = vals[:, 3:], gx[:, 3:], gy[:, 3:]
        vmin, vmax = vals.min(axis=1), vals.max(axis=1)
        if analytic:
            # curvature of the field inside the triangle is not seen by the samples
            pad = 0.25 * (vmax - vmin) + 1e-14
            vmin, vmax = vmin - pad, vmax + pad
        edge = ((vmin <= lo) & (vmax >= lo)) | ((vmin <= hi) & (vmax >= hi))
        leaf = edge & ((diam <= leaf_size) | (level >= max_level))
        split = edge & ~leaf
        area = mesh.areas[parent] * 4.0 ** (-level)
        inner = ~edge
        f = integrand(qv[inner], qgx[inner], qgy[inner])
        total += float(np.sum(area[inner] * (f @ rule.weights)))
        if leaf.any():
            vv = vals[leaf, :3]
            frac = _linear_cdf(vv, hi) - _linear_cdf(vv, lo)
            w = weight(qv[leaf], qgx[leaf], qgy[leaf]) @ rule.weights
            total += float(np.sum(area[leaf] * frac * w))
        if not split.any():
            break
        B = np.einsum("ckj,njl->nckl", _CHILDREN, B[split]).reshape(-1, 3, 3)
        parent = np.repeat(parent[split], 4)
        diam *= 0.5
        level += 1
    return total


def _leaf_size(sampler: _Sampler, r: float, resolution: float) -> float:
    if sampler.fe is not None:
        return np.inf  # P1 fields are linear on every triangle, so edge leaves are exact
    return r / (max(_gradient_bound(sampler), 1e-12) * resolution)


def _gradient_bound(sampler: _Sampler) -> float:
    m = sampler.mesh
    if sampler.fe is not None:
        return float(np.abs(m.grad_field(sampler.fe)).sum(axis=1).max())
    X = m.vertices
    gx, gy = sampler.analytic.grad(X[:, 0], X[:, 1])
    return float(np.max(np.abs(gx) + np.abs(gy)))


def band_functional(y, tbar: float, r: float, sigma0: float, base_m: int = 32,
                    resolution: float = 2.0) -> float:
    """sigma0 * int 1{0 < |y - tbar| <= r} (|d1 y| + |d2 y|) dx."""
    if r <= 0:
        raise ValueError("r must be positive")
    if sigma0 == 0.0:
        return 0.0
    s = _sampler(y, base_m)

    def weight(v, gx, gy):
        return np.abs(gx) + np.abs(gy)

    def integrand(v, gx, gy):
        d = np.abs(v - tbar)
        return np.where((d > 0) & (d <= r), weight(v, gx, gy), 0.0)

    leaf = _leaf_size(s, r, resolution)
    return sigma0 * _band_quadrature(s, tbar - r, tbar + r, integrand, weight, leaf)


def sigma_r(y, tbar: float, r: float, sigma0: float, **kw) -> float:
    return band_functional(y, tbar, r, sigma0, **kw) / r


def band_measure(y, tbar: float, r: float, base_m: int = 32, resolution: float = 2.0) -> float:
    """Area of {|y - tbar| < r}."""
    if r <= 0:
        raise ValueError("r must be positive")
    s = _sampler(y, base_m)

    def integrand(v, gx, gy):
        return (np.abs(v - tbar) < r).astype(float)

    leaf = _leaf_size(s, r, resolution)
    return _band_quadrature(s, tbar - r, tbar + r, integrand, lambda v, gx, gy: np.ones_like(v), leaf)


def default_radii(n: int = 7, r0: float = 0.1) -> list:
    return [r0 * 0.5 ** k for k in range(n)]


@dataclass
class SigmaEstimate:
    limit: float
    radii: list
    values: list
    blowup: bool = False
    method: str = "linear"  # "linear" fit in r or "aitken" for a resolved power law


def _aitken(v0: float, v1: float, v2: float):
    """Aitken delta-squared limit when the last differences shrink geometrically, else None."""
    d1, d2 = v1 - v0, v2 - v1
    scale = max(abs(v2), 1e-300)
    if d1 == 0.0 or abs(d2) < 1e-6 * scale or d1 * d2 <= 0:
        return None
    q = d2 / d1
    if not 0.2 <= q <= 0.9:
        return None
    return v2 + d2 * q / (1.0 - q)


def estimate_sigma(y, tbar: float, sigma0: float, radii=None, fit_points: int = 3,
                   **kw) -> SigmaEstimate:
    """Extrapolate sigma_r to r -> 0 from a decreasing list of radii.

    The default is a least-squares line in r through the ``fit_points``
    smallest radii.  When the last three values approach their limit like a
    power of r slower than r itself (a geometric tail under r-halving, as at a
    nondegenerate extremum where sigma_r ~ sqrt(r)), Aitken's delta-squared
    step is used instead.  Steady growth is flagged as a blow-up.
    """
    radii = list(default_radii() if radii is None else radii)
    if len(radii) < 3:
        raise ValueError("need at least three radii")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    vals = [sigma_r(y, tbar, r, sigma0, **kw) for r in radii]
    k = min(fit_points, len(radii))
    tail = np.array(vals[-k:])
    # growth by a constant factor under halving means sigma_r ~ r^-gamma
    if np.all(tail > 0) and np.all(tail[1:] / tail[:-1] > 1.3):
        log.warning("sigma_r grows as r -> 0; jump functional looks infinite")
        return SigmaEstimate(np.inf, radii, vals, True, "blowup")
    _, icpt = np.polyfit(np.array(radii[-k:]), tail, 1)
    limit, method = float(icpt), "linear"
    ratios = np.array(radii[1:]) / np.array(radii[:-1])
    halving = np.allclose(ratios[-2:], ratios[-1])
    acc = _aitken(*vals[-3:]) if halving else None
    # a linear-in-r tail shrinks with q equal to the radius ratio; only slower tails need Aitken
    if acc is not None and (vals[-1] - vals[-2]) / (vals[-2] - vals[-3]) > ratios[-1] * 1.1:
        limit, method = acc, "aitken"
    return SigmaEstimate(max(limit, 0.0), radii, vals, False, method)


def sigma_sinsin_exact(tbar: float, sigma0: float = 1.0) -> float:
    """Limit of the jump functional of sin(pi x1) sin(pi x2)."""
    if tbar == 1.0:
        return 0.0
    if tbar == 0.0:
        return 4.0 * sigma0
    if 0.0 < tbar < 1.0:
        return 8.0 * sigma0 * (1.0 - 2.0 / np.pi * np.arcsin(tbar))
    raise ValueError("closed form known for 0 <= tbar <= 1 only")


# ---------------------------------------------------------------- level sets

@dataclass
class LevelSegment:
    tri: int
    start: np.ndarray
    end: np.ndarray
    grad: np.ndarray  # gradient of the field on the triangle
    degenerate: bool = False  # segment runs along a triangle edge
    weight: float = 1.0  # edge segments are shared by their two triangles

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))


def level_segments(y, tbar: float, mesh: TriMesh | None = None) -> list:
    """Marching-triangle extraction of {y_h = tbar} from a P1 field."""
    if isinstance(y, asm.FeFunction):
        mesh, vals = y.mesh, y.values
    else:
        vals = asm.nodal(y, mesh)
    V, T = mesh.vertices, mesh.triangles
    d = vals[T] - tbar  # (nt, 3)
    cand = np.flatnonzero((d.min(axis=1) <= 0) & (d.max(axis=1) >= 0))
    grads = mesh.grad_field(vals)
    edge_count = _edge_triangle_count(mesh)
    segs = []
    for t in cand:
        dt = d[t]
        idx = T[t]
        zero = dt == 0
        if zero.all():
            for a, b in ((0, 1), (1, 2), (2, 0)):
                w = 1.0 / edge_count[_edge_key(idx[a], idx[b])]
                segs.append(LevelSegment(int(t), V[idx[a]].copy(), V[idx[b]].copy(), grads[t], True, w))
            continue
        if zero.sum() == 2:
            a, b = np.flatnonzero(zero)
            w = 1.0 / edge_count[_edge_key(idx[a], idx[b])]
            segs.append(LevelSegment(int(t), V[idx[a]].copy(), V[idx[b]].copy(), grads[t], True, w))
            continue
        pts = [V[idx[k]] for k in range(3) if zero[k]]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if dt[a] * dt[b] < 0:
                s = dt[a] / (dt[a] - dt[b])
                pts.append(V[idx[a]] + s * (V[idx[b]] - V[idx[a]]))
        if len(pts) == 2:
            segs.append(LevelSegment(int(t), np.array(pts[0]), np.array(pts[1]), grads[t]))
    return segs


def _edge_key(a, b):
    return (int(a), int(b)) if a < b else (int(b), int(a))


def _edge_triangle_count(mesh: TriMesh) -> dict:
    if "edge_count" not in mesh._cache:
        T = mesh.triangles
        e = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
        keys, counts = np.unique(e, axis=0, return_counts=True)
        mesh._cache["edge_count"] = {(int(a), int(b)): int(c) for (a, b), c in zip(keys, counts)}
    return mesh._cache["edge_count"]


def total_length(segments) -> float:
    return float(sum(s.weight * s.length for s in segments))


def _interp_in_triangle(mesh: TriMesh, nodal_vals, tri: int, p: np.ndarray) -> float:
    """Value at point p of the P1 field restricted to triangle ``tri``."""
    idx = mesh.triangles[tri]
    P = mesh.vertices[idx]
    g = mesh.gradients[tri]  # d lambda_k / dx
    lam = np.array([1.0, 0.0, 0.0]) + g @ (p - P[0])
    lam[1:] = g[1:] @ (p - P[0])
    lam[0] = 1.0 - lam[1] - lam[2]
    return float(lam @ nodal_vals[idx])


def q2_line_integral(y, phi, z, coeff, mesh: TriMesh | None = None) -> float:
    """Second-order nonsmooth curvature term: a line integral over {y_h = kink}.

    (a0'(t) - a1'(t)) / 2 * int 1{|grad y| > 0} z^2 (grad y . grad phi) / |grad y| dH^1,
    with z^2 integrated by 2-point Gauss on each segment.
    """
    if isinstance(y, asm.FeFunction):
        mesh = y.mesh
    yv, pv, zv = (asm.nodal(f, mesh) for f in (y, phi, z))
    segs = level_segments(yv, coeff.kink, mesh)
    if not segs:
        return 0.0
    gphi = mesh.grad_field(pv)
    gl = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    total = 0.0
    for s in segs:
        gnorm = float(np.hypot(*s.grad))
        if gnorm == 0.0 or s.length == 0.0:
            continue
        z2 = sum(_interp_in_triangle(mesh, zv, s.tri, s.start + g * (s.end - s.start)) ** 2 for g in gl) / 2.0
        total += s.weight * s.length * z2 * float(s.grad @ gphi[s.tri]) / gnorm
    return 0.5 * coeff.slope_jump * total


# ---------------------------------------------------------------- curvature

@dataclass
class Curvature:
    smooth: float
    first: float
    second: float
    z: np.ndarray = field(repr=False, default=None)

    @property
    def total(self) -> float:
        return self.smooth + self.first + self.second


def q_total(spec, mesh: TriMesh, y, phi, v, degree: int = asm.ERROR_DEGREE) -> Curvature:
    """Total curvature Q = Q_s + Q_1 + Q_2 in direction v at (y, phi)."""
    y, phi = asm.nodal(y, mesh), asm.nodal(phi, mesh)
    coeff = spec.coeff
    z = solve_linearized(mesh, coeff, spec.b_field, y, v)
    rule = quad_rule(degree)
    w = mesh.areas[:, None] * rule.weights[None, :]
    yq, zq = mesh.at_qp(y, rule), mesh.at_qp(z, rule)
    vq = asm.field_at_qp(mesh, v, rule)
    gy, gp, gz = mesh.grad_field(y), mesh.grad_field(phi), mesh.grad_field(z)
    gy_gp = np.einsum("td,td->t", gy, gp)[:, None]
    gz_gp = np.einsum("td,td->t", gz, gp)[:, None]
    Lyy = spec.cost.dyy(mesh, rule, yq)
    a2 = np.where(yq != coeff.kink, coeff.second_branchwise(yq), 0.0)
    q_s = 0.5 * np.sum(w * Lyy * zq ** 2) + 0.5 * spec.nu * np.sum(w * vq ** 2) \
        - 0.5 * np.sum(w * a2 * zq ** 2 * gy_gp)
    q_1 = -np.sum(w * coeff.eval_dir(yq, zq) * gz_gp)
    q_2 = q2_line_integral(y, phi, z, coeff, mesh)
    return Curvature(float(q_s), float(q_1), float(q_2), z)
