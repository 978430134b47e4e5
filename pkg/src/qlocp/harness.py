"""Exact solution of the model example, error norms, EOC and the convergence study.

The model example on the unit square has a = max(t - 1, 0), b = 1, box [0, 2 pi^2]
and y_d = (1 + 4 nu pi^4) sin(pi x1) sin(pi x2), with exact solution
u = 2 pi^2 s, y = s, phi = -nu u where s = sin(pi x1) sin(pi x2).  Since y <= 1
the coefficient is inactive at the optimum, so the example is valid for any nu > 0.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli

from . import assembly as asm
from .coeff import PC1Coeff
from .mesh import TriMesh, quad_rule, uniform_unit_square
from .ocp import OcpSolution, OcpSpec, SsnOptions, ssn_solve
from .pde import NewtonOptions, solve_state
from .sparse import SolverOptions

log = logging.getLogger(__name__)

NU_DEFAULT = 1e-4
PI2 = math.pi ** 2
CSV_COLUMNS = ("h", "l2_error", "linf_error", "eoc_l2", "eoc_linf", "ssn_iters", "seconds")


class ConfigError(ValueError):
    """Malformed or inconsistent study configuration."""


class StudyNotConverged(RuntimeError):
    """A mesh in the study failed to converge; ``rows`` holds the finished ones."""

    def __init__(self, m: int, rows: list):
        super().__init__(f"solver did not converge on m={m}")
        self.m, self.rows = m, rows


# ---------------------------------------------------------------- model example

def _s(x1, x2):
    return np.sin(np.pi * np.asarray(x1)) * np.sin(np.pi * np.asarray(x2))


def exact_example(name: str, x1, x2, nu: float = NU_DEFAULT):
    """Exact u, y, phi or the desired state y_d of the model example."""
    if name == "u":
        return 2 * PI2 * _s(x1, x2)
    if name == "y":
        return _s(x1, x2)
    if name == "phi":
        return -nu * 2 * PI2 * _s(x1, x2)
    if name == "y_d":
        return (1 + 4 * nu * PI2 ** 2) * _s(x1, x2)
    raise KeyError(f"unknown field {name!r}; expected u, y, phi or y_d")


def example_spec(nu: float = NU_DEFAULT) -> OcpSpec:
    return OcpSpec(nu=nu, alpha=0.0, beta=2 * PI2, coeff=PC1Coeff.max_type(1.0), b_field=1.0,
                   y_d=lambda x1, x2: exact_example("y_d", x1, x2, nu))


def ssn_start(mesh: TriMesh) -> np.ndarray:
    """L2 projection of 32 x1 x2 (1 - x1)(1 - x2); the adjoint starts at zero."""
    return asm.l2_projection(mesh, lambda x1, x2: 32 * x1 * x2 * (1 - x1) * (1 - x2))


def solve_example(m: int, nu: float = NU_DEFAULT, control: str = "variational",
                  opts: SsnOptions | None = None) -> tuple[TriMesh, OcpSpec, OcpSolution]:
    mesh = uniform_unit_square(m)
    spec = example_spec(nu).on_mesh(mesh)
    sol = ssn_solve(spec, mesh, ssn_start(mesh), np.zeros(mesh.n_vertices), opts, control=control)
    return mesh, spec, sol


# ---------------------------------------------------------------- norms and rates

def error_norms(approx, exact, mesh: TriMesh, mode: str = "pointwise",
                degree: int = asm.ERROR_DEGREE) -> tuple[float, float]:
    """(L2, Linf) norms of approx - exact.

    ``pointwise``: L2 by degree-4 quadrature of the squared difference, Linf
    over all vertices and quadrature points.  ``interpolant``: both norms of the
    P1 interpolant of the difference (exact L2 via the mass matrix, Linf at
    vertices); only available when ``approx`` has vertex values.
    ``approx`` is a nodal vector or a control object; ``exact`` is f(x1, x2).
    """
    X = mesh.vertices
    vert = _vertex_values(approx, mesh)
    if mode == "interpolant":
        if vert is None:
            raise ValueError("interpolant norms need vertex values")
        e = vert - exact(X[:, 0], X[:, 1])
        M = asm.mass(mesh)
        return float(np.sqrt(max(e @ (M @ e), 0.0))), float(np.max(np.abs(e)))
    if mode != "pointwise":
        raise ValueError(f"unknown norm mode {mode!r}")
    rule = quad_rule(degree)
    Q = mesh.quad_points(rule)
    dq = asm.field_at_qp(mesh, approx, rule) - exact(Q[..., 0], Q[..., 1])
    l2 = float(np.sqrt(np.sum(mesh.areas * ((dq ** 2) @ rule.weights))))
    linf = float(np.max(np.abs(dq)))
    if vert is not None:
        linf = max(linf, float(np.max(np.abs(vert - exact(X[:, 0], X[:, 1])))))
    return l2, linf


def _vertex_values(approx, mesh):
    if hasattr(approx, "at_vertices"):
        return approx.at_vertices()
    if callable(approx) or hasattr(approx, "at_quadrature"):
        return None
    arr = np.asarray(approx, dtype=float)
    return arr if arr.shape == (mesh.n_vertices,) else None


def eoc(errors, hs) -> list:
    """log(e_{n+1}/e_n) / log(h_{n+1}/h_n) for consecutive pairs."""
    e, h = np.asarray(errors, dtype=float), np.asarray(hs, dtype=float)
    if e.shape != h.shape or e.ndim != 1 or len(e) < 2:
        raise ValueError("need equal-length sequences of at least two entries")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    if np.any(np.diff(h) == 0):
        raise ValueError("consecutive mesh sizes must differ")
    return [float(v) for v in np.diff(np.log(e)) / np.diff(np.log(h))]


# ---------------------------------------------------------------- study

PROBLEMS = ("example1", "poisson")
DEFAULT_NORM = {"example1": "interpolant", "poisson": "pointwise"}


@dataclass
class StudyConfig:
    """Mesh ladder and solver settings for a convergence study.

    Meshes are m = 100 n for each n, unless ``m`` lists them explicitly.
    """

    problem: str = "example1"
    n: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    m: list | None = None
    nu: float = NU_DEFAULT
    control: str = "variational"
    norm: str | None = None  # "interpolant" or "pointwise"; None picks the problem default
    rtol: float = 1e-10
    max_iter: int = 30
    linear_method: str = "auto"
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.control not in ("variational", "piecewise_constant"):
            raise ConfigError(f"unknown control discretization {self.control!r}")
        if self.norm not in (None, "interpolant", "pointwise"):
            raise ConfigError(f"unknown norm mode {self.norm!r}")
        if self.m is None and any(int(k) < 1 for k in self.n):
            raise ConfigError("n must be >= 1")
        ms = self.meshes
        if not ms or any(k < 1 for k in ms) or any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError("mesh list must be positive and strictly increasing")
        if self.nu <= 0 or self.rtol <= 0 or self.max_iter < 1 or self.workers < 1:
            raise ConfigError("nu, rtol, max_iter and workers must be positive")

    @property
    def meshes(self) -> list:
        return [int(k) for k in self.m] if self.m is not None else [100 * int(k) for k in self.n]

    @property
    def norm_mode(self) -> str:
        return self.norm or DEFAULT_NORM[self.problem]

    def ssn_options(self) -> SsnOptions:
        return SsnOptions(rtol=self.rtol, max_iter=self.max_iter,
                          linear=SolverOptions(method=self.linear_method))


@dataclass
class StudyRow:
    h: float
    l2_error: float
    linf_error: float
    eoc_l2: float | None = None
    eoc_linf: float | None = None
    ssn_iters: int = 0
    seconds: float = 0.0


def _run_mesh(cfg: StudyConfig, m: int):
    """One study row (without EOC) and a convergence flag."""
    t0 = time.perf_counter()
    if cfg.problem == "example1":
        mesh, _, sol = solve_example(m, cfg.nu, cfg.control, cfg.ssn_options())
        approx, iters, ok = sol.control, sol.ssn_iterations, sol.converged
        exact = lambda x1, x2: exact_example("u", x1, x2, cfg.nu)  # noqa: E731
    else:
        # -Laplace y = 2 pi^2 s with y = s
        mesh = uniform_unit_square(m)
        opts = NewtonOptions(rtol=cfg.rtol, max_iter=cfg.max_iter,
                             linear=SolverOptions(method=cfg.linear_method))
        approx, rep = solve_state(mesh, PC1Coeff.zero(), 1.0,
                                  lambda x1, x2: exact_example("u", x1, x2), opts)
        iters, ok = rep.iterations, rep.converged
        exact = lambda x1, x2: exact_example("y", x1, x2)  # noqa: E731
    norm = cfg.norm_mode
    if norm == "interpolant" and _vertex_values(approx, mesh) is None:
        norm = "pointwise"
    l2, linf = error_norms(approx, exact, mesh, norm)
    row = StudyRow(float(mesh.h), l2, linf, ssn_iters=int(iters), seconds=time.perf_counter() - t0)
    log.info("m=%d: L2 %.6e Linf %.6e iters %d (%.1fs)", m, l2, linf, iters, row.seconds)
    return m, row, ok


def _fill_eoc(rows: list) -> list:
    if len(rows) >= 2:
        hs = [r.h for r in rows]
        e2 = eoc([r.l2_error for r in rows], hs)
        ei = eoc([r.linf_error for r in rows], hs)
        for r, a, b in zip(rows, e2, ei):
            r.eoc_l2, r.eoc_linf = a, b
    return rows


def run_study(cfg: StudyConfig) -> list:
    """Solve on every mesh, compute errors and EOCs, write the CSV if ``cfg.out`` is set.

    Rows come back ordered by decreasing h.  If any mesh fails to converge the
    finished rows are still written and :class:`StudyNotConverged` is raised.
    """
    meshes = cfg.meshes
    if cfg.workers > 1 and len(meshes) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(meshes))) as pool:
            results = list(pool.map(_run_mesh, [cfg] * len(meshes), meshes))
    else:
        results = [_run_mesh(cfg, m) for m in meshes]
    results.sort(key=lambda t: -t[1].h)
    failed = [m for m, _, ok in results if not ok]
    rows = _fill_eoc([r for _, r, ok in results if ok])
    if cfg.out:
        write_csv(cfg.out, rows)
    if failed:
        raise StudyNotConverged(failed[0], rows)
    return rows


# ---------------------------------------------------------------- CSV and config

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(path, rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def read_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            opt = lambda k: float(rec[k]) if rec[k] != "" else None  # noqa: E731
            rows.append(StudyRow(float(rec["h"]), float(rec["l2_error"]), float(rec["linf_error"]),
                                 opt("eoc_l2"), opt("eoc_linf"), int(rec["ssn_iters"]),
                                 float(rec["seconds"])))
    return rows


def config_from_dict(d: dict) -> StudyConfig:
    known = {f.name for f in fields(StudyConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return StudyConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> StudyConfig:
    """Read a flat TOML file whose keys are StudyConfig fields."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if any(isinstance(v, dict) for v in data.values()):
        raise ConfigError("config must be flat key/value pairs")
    return config_from_dict(data)


def config_as_dict(cfg: StudyConfig) -> dict:
    return {k: v for k, v in asdict(cfg).items() if v is not None}
