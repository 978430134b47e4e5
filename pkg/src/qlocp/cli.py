"""Command line entry point: ``qlocp {study,solve,jump,curvature,band}``.

Exit codes: 0 success, 2 solver non-convergence, 3 configuration or usage error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import harness as H
from .mesh import quad_rule, uniform_unit_square
from .ocp import PiecewiseConstantControl, SsnOptions
from .pde import dump_field

EXIT_OK, EXIT_NOCONV, EXIT_CONFIG = 0, 2, 3

DIRECTIONS = {
    "sinsin": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
    "sin2": lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y),
    "bubble": lambda x, y: 16 * x * y * (1 - x) * (1 - y),
    "tilted": lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y) * (1 + x - 0.5 * y),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _field(name: str):
    if name == "sinsin":
        return geo.sinsin()
    if name == "x1":
        return geo.affine(0.0, 1.0, 0.0)
    raise argparse.ArgumentTypeError(f"unknown field {name!r} (sinsin, x1)")


def _reference(field: str, tbar: float, sigma0: float):
    if field == "sinsin" and 0.0 <= tbar <= 1.0:
        return geo.sigma_sinsin_exact(tbar, sigma0)
    if field == "x1" and 0.0 < tbar < 1.0:
        return 2.0 * sigma0
    return None


def _writer(path):
    fh = open(path, "w", newline="") if path else sys.stdout
    return fh, csv.writer(fh)


def cmd_study(args) -> int:
    cfg = H.load_config(args.config)
    over = {k: v for k, v in (("out", args.out), ("workers", args.workers)) if v is not None}
    if over:
        cfg = H.config_from_dict({**H.config_as_dict(cfg), **over})
    try:
        rows = H.run_study(cfg)
    except H.StudyNotConverged as exc:
        logging.error("%s; partial results kept", exc)
        return EXIT_NOCONV
    if not cfg.out:
        fh, w = _writer(None)
        w.writerow(H.CSV_COLUMNS)
        for r in rows:
            w.writerow([H._fmt(getattr(r, c)) for c in H.CSV_COLUMNS])
    return EXIT_OK


def cmd_solve(args) -> int:
    opts = SsnOptions(rtol=args.rtol, max_iter=args.max_iter)
    mesh, spec, sol = H.solve_example(args.m, args.nu, args.control, opts)
    l2, linf = H.error_norms(sol.control, lambda a, b: H.exact_example("u", a, b, args.nu), mesh,
                             "pointwise" if args.control == "piecewise_constant" else args.norm)
    print(f"m={args.m} converged={sol.converged} ssn_iters={sol.ssn_iterations} "
          f"residual={sol.residual_history[-1]:.3e} l2_error={l2:.10e} linf_error={linf:.10e}")
    if args.dump:
        out = Path(args.dump)
        out.mkdir(parents=True, exist_ok=True)
        mesh.dump(out / "mesh.txt")
        dump_field(out / "y.txt", sol.y)
        dump_field(out / "phi.txt", sol.phi)
        if isinstance(sol.control, PiecewiseConstantControl):
            c = mesh.vertices[mesh.triangles].mean(axis=1)
            samples = np.column_stack([c, sol.control.values])
        else:
            samples = sol.control_samples(quad_rule(2))
        np.savetxt(out / "control.txt", samples, fmt="%.17g", header="x y u")
    return EXIT_OK if sol.converged else EXIT_NOCONV


def cmd_jump(args) -> int:
    field = _field(args.field)
    est = geo.estimate_sigma(field, args.tbar, args.sigma0, radii=args.rs or None)
    ref = _reference(args.field, args.tbar, args.sigma0)
    fh, w = _writer(args.out)
    w.writerow(["r", "sigma_r", "extrapolated"] + (["reference"] if ref is not None else []))
    for r, s in zip(est.radii, est.values):
        w.writerow([H._fmt(r), H._fmt(s), H._fmt(est.limit)] + ([H._fmt(ref)] if ref is not None else []))
    if est.blowup:
        logging.warning("sigma_r grows as r decreases; the limit may be infinite")
    if args.out:
        fh.close()
    return EXIT_OK


def cmd_band(args) -> int:
    field = _field(args.field)
    fh, w = _writer(args.out)
    w.writerow(["r", "measure", "measure_over_r"])
    for r in args.rs:
        meas = geo.band_measure(field, args.tbar, r)
        w.writerow([H._fmt(r), H._fmt(meas), H._fmt(meas / r)])
    if args.out:
        fh.close()
    return EXIT_OK


def cmd_curvature(args) -> int:
    """Curvature at the interpolated exact optimum in a named direction."""
    mesh = uniform_unit_square(args.m)
    spec = H.example_spec(args.nu).on_mesh(mesh)
    y = mesh.interpolate(lambda a, b: H.exact_example("y", a, b, args.nu))
    phi = mesh.interpolate(lambda a, b: H.exact_example("phi", a, b, args.nu))
    q = geo.q_total(spec, mesh, y, phi, DIRECTIONS[args.direction])
    print(f"Q={q.total:.15e} Q_s={q.smooth:.15e} Q_1={q.first:.3e} Q_2={q.second:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qlocp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("study", help="convergence study from a TOML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("solve", help="solve the model example on one mesh")
    s.add_argument("--problem", choices=["example1"], default="example1")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--nu", type=float, default=H.NU_DEFAULT)
    s.add_argument("--control", choices=["variational", "piecewise_constant"], default="variational")
    s.add_argument("--norm", choices=["interpolant", "pointwise"], default="interpolant")
    s.add_argument("--rtol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=30)
    s.add_argument("--dump")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("jump", help="jump functional estimate on an analytic field")
    s.add_argument("--field", default="sinsin", choices=["sinsin", "x1"])
    s.add_argument("--tbar", type=float, required=True)
    s.add_argument("--sigma0", type=float, default=1.0)
    s.add_argument("--rs", type=_floats)
    s.add_argument("--out")
    s.set_defaults(func=cmd_jump)

    s = sub.add_parser("band", help="measure of the band |y - tbar| < r")
    s.add_argument("--field", default="sinsin", choices=["sinsin", "x1"])
    s.add_argument("--tbar", type=float, required=True)
    s.add_argument("--rs", type=_floats, default=[1e-2, 1e-3])
    s.add_argument("--out")
    s.set_defaults(func=cmd_band)

    s = sub.add_parser("curvature", help="curvature parts at the interpolated optimum")
    s.add_argument("--problem", choices=["example1"], default="example1")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--nu", type=float, default=H.NU_DEFAULT)
    s.add_argument("--direction", choices=sorted(DIRECTIONS), default="sinsin")
    s.set_defaults(func=cmd_curvature)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except H.ConfigError as exc:
        logging.error("%s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.cmd in ("jump", "band"):
            logging.error("%s", exc)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
