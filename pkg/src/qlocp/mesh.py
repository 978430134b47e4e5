"""Structured triangulation of the unit square, P1 reference data and triangle quadrature."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on a triangle in barycentric coordinates.

    ``weights`` sum to one, so integrals are ``area * sum(w * f(points))``.
    """

    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def n(self) -> int:
        return len(self.weights)


def quad_rule(degree: int) -> QuadRule:
    if degree == 1:
        pts = np.array([[1 / 3, 1 / 3, 1 / 3]])
        w = np.array([1.0])
    elif degree == 2:
        pts = np.array([[2 / 3, 1 / 6, 1 / 6],
                        [1 / 6, 2 / 3, 1 / 6],
                        [1 / 6, 1 / 6, 2 / 3]])
        w = np.full(3, 1 / 3)
    elif degree == 4:
        # Strang-Fix / Dunavant 6-point rule, closed-form nodes and weights
        r = np.sqrt(38.0 - 44.0 * np.sqrt(0.4))
        a1 = (8.0 - np.sqrt(10.0) + r) / 18.0
        a2 = (8.0 - np.sqrt(10.0) - r) / 18.0
        b1, b2 = 1.0 - 2.0 * a1, 1.0 - 2.0 * a2
        q = np.sqrt(213125.0 - 53320.0 * np.sqrt(10.0))
        w1, w2 = (620.0 + q) / 3720.0, (620.0 - q) / 3720.0
        pts = np.array([[a1, a1, b1], [a1, b1, a1], [b1, a1, a1],
                        [a2, a2, b2], [a2, b2, a2], [b2, a2, a2]])
        w = np.array([w1, w1, w1, w2, w2, w2])
    else:
        raise ValueError(f"unsupported quadrature degree {degree}; use 1, 2 or 4")
    return QuadRule(pts, w, degree)


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) counterclockwise
    boundary_mask: np.ndarray  # (nv,) bool
    subdivisions: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return np.sqrt(2.0) / self.subdivisions

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def gradients(self) -> np.ndarray:
        """(nt, 3, 2) constant gradients of the three local basis functions."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        twoA = 2.0 * self.signed_areas
        g = np.empty((self.n_triangles, 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            g[:, k, 0] = (y[:, i] - y[:, j]) / twoA
            g[:, k, 1] = (x[:, j] - x[:, i]) / twoA
        return g

    def p1_gradients(self, tri: int) -> np.ndarray:
        return self.gradients[tri]

    def quad_points(self, rule: QuadRule) -> np.ndarray:
        """(nt, nq, 2) physical quadrature points."""
        key = ("qp", rule.degree)
        if key not in self._cache:
            p = self.vertices[self.triangles]
            self._cache[key] = np.einsum("qk,tkd->tqd", rule.points, p)
        return self._cache[key]

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of a callable f(x1, x2)."""
        return np.asarray(f(self.vertices[:, 0], self.vertices[:, 1]), dtype=float) * np.ones(self.n_vertices)

    def at_qp(self, nodal: np.ndarray, rule: QuadRule) -> np.ndarray:
        """Values of a P1 field at quadrature points, shape (nt, nq)."""
        return nodal[self.triangles] @ rule.points.T

    def grad_field(self, nodal: np.ndarray) -> np.ndarray:
        """Per-triangle constant gradient of a P1 field, shape (nt, 2)."""
        return np.einsum("tk,tkd->td", nodal[self.triangles], self.gradients)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.subdivisions}\n")
            for (x, y), b in zip(self.vertices, self.boundary_mask):
                fh.write(f"{x:.17g} {y:.17g} {int(b)}\n")
            for i, j, k in self.triangles:
                fh.write(f"{i} {j} {k}\n")


def uniform_unit_square(m: int) -> TriMesh:
    """m x m squares, each cut along its bottom-left to top-right diagonal.

    Vertices are numbered row-major: index = j * (m + 1) + i for (i/m, j/m).
    """
    if m < 1:
        raise ValueError("need at least one subdivision")
    s = np.arange(m + 1) / m
    X, Y = np.meshgrid(s, s)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(m), np.arange(m))
    i, j = i.ravel(), j.ravel()
    v00 = j * (m + 1) + i
    v10 = v00 + 1
    v01 = v00 + m + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.empty((2 * m * m, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    bmask = (verts[:, 0] == 0) | (verts[:, 0] == 1) | (verts[:, 1] == 0) | (verts[:, 1] == 1)
    return TriMesh(verts, tris, bmask, m)
