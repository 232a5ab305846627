"""Command-line front end.  Every subcommand writes CSV (or XYZ for ``gen``/``fair``).

Exit codes: 0 success, 1 usage error, 2 data error, 3 every point failed.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import pipeline as pl
from .errors import DataError, DomainError, KanRBFError
from .surfaces import add_noise, cube_cloud, halton_sample, make_surface, write_xyz
from .trialspace import CenterConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _spec(args) -> pl.EstimatorSpec:
    return pl.EstimatorSpec(args.method, args.tau, args.stencil_size, args.norm,
                            CenterConfig(args.config), args.mu)


def cmd_gen(args) -> int:
    if args.shape == "cube":
        cloud = cube_cloud(args.n, seed=args.seed)
    else:
        cloud = halton_sample(make_surface(args.shape, args.params), args.n)
    if args.noise > 0:
        cloud = add_noise(cloud, args.noise, args.seed)
    write_xyz(cloud, args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cloud = pl.ingest_xyz(args.input, require_normals=args.ground_truth)
    frames = pl.estimate_cloud(cloud, _spec(args), workers=args.workers)
    errors = pl.frame_errors(frames, cloud.normals) if args.ground_truth else None
    pl.emit_points(cloud, frames, args.out, errors)
    if all(np.isnan(f.normal).any() for f in frames):
        print("every point failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _finish(report, args) -> int:
    pl.emit_report(report, args.out)
    if report.rows and all(not np.isfinite(r["max_err"]) for r in report.rows):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_config_study(args) -> int:
    shape = make_surface(args.shape, args.params)
    rep = pl.run_config_study(shape, _ints(args.n), _ints(args.tau), _ints(args.stencil_sizes),
                              [c for c in args.configs.split(",") if c], args.norm, args.eval_count)
    return _finish(rep, args)


def cmd_norm_study(args) -> int:
    shape = make_surface(args.shape, args.params)
    rep = pl.run_norm_study(shape, _ints(args.n), _ints(args.tau), _ints(args.stencil_sizes),
                            args.config, eval_count=args.eval_count)
    return _finish(rep, args)


def cmd_convergence(args) -> int:
    shape = make_surface(args.shape, args.params)
    rep = pl.run_convergence(shape, _ints(args.tau), _ints(args.n), _ints(args.stencil_sizes),
                             config=args.config, eval_count=args.eval_count)
    if args.fits_out:
        pl.emit_fits(rep, args.fits_out)
    return _finish(rep, args)


def cmd_sphube(args) -> int:
    rep = pl.run_flattening_sphube(_floats(args.s), args.n, args.tau, args.stencil_size,
                                   config=args.config, eval_count=args.eval_count)
    if args.field_out:
        pl.emit_field(rep, args.field_out)
    return _finish(rep, args)


def cmd_fair(args) -> int:
    cloud = pl.ingest_xyz(args.input)
    out = pl.fair_cloud(cloud, args.iterations, _spec(args), args.sigma_kappa, args.workers)
    write_xyz(out, args.out)
    if len(out.meta.get("flags", {})) == len(cloud.points) and args.iterations > 0:
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kanrbf", description="Normal and curvature estimation on point clouds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def shape_args(sp, default="ellipsoid"):
        sp.add_argument("--shape", default=default, choices=["ellipsoid", "torus", "sphube"])
        sp.add_argument("--params", type=_floats, default=None,
                        help="comma-separated shape parameters")

    def study_args(sp, n, tau):
        sp.add_argument("--n", default=n, help="comma-separated cloud sizes")
        sp.add_argument("--tau", default=tau, help="comma-separated smoothness orders")
        sp.add_argument("--stencil-sizes", default="40,50,60,70,80")
        sp.add_argument("--eval-count", type=int, default=None,
                        help="evaluate errors on this many evenly spaced points")
        sp.add_argument("--out", required=True)

    def estimator_args(sp, tau=5, ns=40):
        sp.add_argument("--method", default="krbf", choices=list(pl.METHODS))
        sp.add_argument("--tau", type=int, default=tau)
        sp.add_argument("--stencil-size", type=int, default=ns)
        sp.add_argument("--norm", default="native", choices=list(pl.NORMS))
        sp.add_argument("--config", default="stretch_regrid")
        sp.add_argument("--mu", type=float, default=None, help="Tikhonov weight")
        sp.add_argument("--workers", type=int, default=1)

    g = sub.add_parser("gen", help="sample a synthetic cloud to XYZ")
    g.add_argument("shape", choices=["ellipsoid", "torus", "sphube", "cube"])
    g.add_argument("params", nargs="*", type=float)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("estimate", help="per-point normals and curvatures")
    e.add_argument("--in", dest="input", required=True)
    estimator_args(e)
    e.add_argument("--ground-truth", action="store_true",
                   help="input carries exact normals; report per-point errors")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("config-study", help="KRBF center configurations")
    shape_args(c)
    study_args(c, "100,500,5000", "3,5")
    c.add_argument("--configs", default="1,2,3,4")
    c.add_argument("--norm", default="native", choices=list(pl.NORMS))
    c.set_defaults(func=cmd_config_study)

    n = sub.add_parser("norm-study", help="HRBF/KRBF with native and l2 objectives")
    shape_args(n)
    study_args(n, "5000", "3")
    n.add_argument("--config", default="stretch_regrid")
    n.set_defaults(func=cmd_norm_study)

    v = sub.add_parser("convergence", help="error against fill distance")
    shape_args(v, "torus")
    study_args(v, "500,2000,8000,32000", "3,4")
    v.add_argument("--config", default="stretch_regrid")
    v.add_argument("--fits-out", default=None, help="CSV of fitted log-log slopes")
    v.set_defaults(func=cmd_convergence)

    s = sub.add_parser("sphube-sweep", help="flattening sphube comparison")
    s.add_argument("--s", default="0.1,0.3,0.5,0.7,0.9")
    s.add_argument("--n", type=int, default=5000)
    s.add_argument("--tau", type=int, default=5)
    s.add_argument("--stencil-size", type=int, default=40)
    s.add_argument("--config", default="stretch_regrid")
    s.add_argument("--eval-count", type=int, default=None)
    s.add_argument("--field-out", default=None, help="per-point error field CSV")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sphube)

    f = sub.add_parser("fair", help="curvature-weighted fairing")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--iterations", type=int, default=1)
    f.add_argument("--sigma-kappa", type=float, default=None)
    estimator_args(f, tau=3, ns=100)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fair)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DomainError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KanRBFError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
