"""Command-line benchmark harness.

Subcommands reproduce the desk-scale experiments: ``synthetic`` (named
spectra), ``nuclear-norm`` (Gramian of a MatrixMarket data matrix),
``kernel-logdet`` (dense kernel matrices), ``bounds`` (bound-vs-
empirical sweep), and ``report`` (re-render an emitted CSV as SVG).

Exit codes: 0 success, 2 spec validation error, 3 ground truth
unavailable, 4 I/O failure.
"""

import argparse
import os
import sys

import numpy as np

from . import bench, operators, specfun, svg
from .estimators import FunctionOracle, ORACLE_DIM_GUARD

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_TRUTH = 3
EXIT_IO = 4


def _parse_grid(text):
    """Parse '20,40,60' or '20:200:20' into a sorted integer grid."""
    text = text.strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            start, stop, step = parts[0], parts[1], 1
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ValueError(f"bad grid spec {text!r}")
        grid = list(range(start, stop + 1, step))
    else:
        grid = [int(p) for p in text.split(",") if p.strip()]
    if not grid:
        raise ValueError(f"empty grid spec {text!r}")
    return grid


def _parse_functions(text):
    return [specfun.parse_function(p) for p in text.split(",") if p.strip()]


def _out_paths(out_dir, stem):
    os.makedirs(out_dir, exist_ok=True)
    return (os.path.join(out_dir, f"{stem}.csv"),
            os.path.join(out_dir, f"{stem}.svg"))


def _common_args(sub, default_estimators="flextrace,fun-nys"):
    sub.add_argument("--k-grid", default="10:100:10",
                     help="sketch sizes: comma list or start:stop:step")
    sub.add_argument("--trials", type=int, default=100)
    sub.add_argument("--functions", default="log1p")
    sub.add_argument("--estimators", default=default_estimators)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default="out")
    sub.add_argument("--time", action="store_true",
                     help="measure wall time (breaks byte determinism)")


def _build_spec(args):
    return bench.ExperimentSpec(
        functions=_parse_functions(args.functions),
        estimators=[e.strip() for e in args.estimators.split(",") if e.strip()],
        k_grid=_parse_grid(args.k_grid),
        trials=args.trials,
        base_seed=args.seed,
        measure_time=args.time,
    )


def _run_and_emit(op, spec, truth, out_dir, stem, title, oracle=None):
    result = bench.run_experiment(op, spec, truth=truth, oracle=oracle)
    csv_path, svg_path = _out_paths(out_dir, stem)
    bench.emit_csv(result, csv_path)
    svg.render_result(result, svg_path, title=title)
    print(f"wrote {csv_path}")
    print(f"wrote {svg_path}")


def _cmd_synthetic(args):
    profile = operators.SpectrumProfile(
        args.profile, args.n,
        exponent=args.poly_exponent, base=args.exp_base,
        cut=args.step_cut, low=args.step_low)
    op = operators.make_synthetic(profile, seed=args.seed, rotated=args.rotated)
    spec = _build_spec(args)
    truth = bench.true_traces_from_eigvals(op.eigenvalues)
    _run_and_emit(op, spec, truth, args.out, f"synthetic_{args.profile}",
                  f"{args.profile} spectrum, n={args.n}")
    return EXIT_OK


def _cmd_nuclear_norm(args):
    sparse = operators.read_matrix_market(args.matrix)
    op = operators.gramian(sparse)
    rows, cols = sparse.rows, sparse.cols
    if rows > bench.SVD_GUARD_SHAPE[0] or cols > bench.SVD_GUARD_SHAPE[1]:
        raise bench.GroundTruthUnavailable(
            f"dense SVD ground truth limited to {bench.SVD_GUARD_SHAPE}, "
            f"matrix is {rows}x{cols}")
    sing = np.linalg.svd(sparse.to_dense(), compute_uv=False)
    truth = bench.true_traces_from_eigvals(sing ** 2)
    spec = _build_spec(args)
    _run_and_emit(op, spec, truth, args.out, "nuclear_norm",
                  f"Gramian of {rows}x{cols} matrix")
    return EXIT_OK


def _cmd_kernel_logdet(args):
    points = operators.read_points_csv(args.points)
    kind, lengthscale, alpha = operators.parse_kernel(args.kernel)
    if lengthscale is None:
        raise ValueError(f"kernel spec {args.kernel!r} is missing l=<value>")
    kspec = operators.KernelSpec(kind, lengthscale, alpha=alpha,
                                 output_scale=args.output_scale,
                                 noise_variance=args.noise)
    op = operators.build_kernel(points, kspec)
    if op.dim > ORACLE_DIM_GUARD:
        raise bench.GroundTruthUnavailable(
            f"dense eigendecomposition ground truth limited to "
            f"n <= {ORACLE_DIM_GUARD}, got {op.dim}")
    eigvals = np.linalg.eigvalsh(op.matrix)[::-1]
    truth = bench.true_traces_from_eigvals(np.maximum(eigvals, 0.0))
    spec = _build_spec(args)
    spec.value_shift = op.logdet_shift
    _run_and_emit(op, spec, truth, args.out, f"kernel_{kspec.kind}",
                  f"{kspec.kind} kernel, n={op.dim}")
    return EXIT_OK


def _cmd_bounds(args):
    profile = operators.SpectrumProfile(
        args.profile, args.n,
        exponent=args.poly_exponent, base=args.exp_base,
        cut=args.step_cut, low=args.step_low)
    functions = _parse_functions(args.functions)
    rows = bench.bound_sweep(profile.eigenvalues, functions,
                             _parse_grid(args.k_grid), args.trials,
                             base_seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"bounds_{args.profile}.csv")
    bench.emit_bound_csv(rows, csv_path)
    print(f"wrote {csv_path}")
    return EXIT_OK


def _cmd_report(args):
    result = bench.read_csv(args.csv)
    svg.render_result(result, args.svg_out, title=args.title)
    print(f"wrote {args.svg_out}")
    return EXIT_OK


def _add_profile_args(sub):
    sub.add_argument("--profile", required=True,
                     choices=["flat", "poly", "exp", "step"])
    sub.add_argument("--n", type=int, default=1000)
    sub.add_argument("--poly-exponent", type=float, default=2.0)
    sub.add_argument("--exp-base", type=float, default=0.9)
    sub.add_argument("--step-cut", type=int, default=50)
    sub.add_argument("--step-low", type=float, default=1e-3)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flextrace-bench",
        description="matrix-free trace estimation experiments")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("synthetic", help="named synthetic spectra")
    _add_profile_args(s)
    s.add_argument("--rotated", action="store_true",
                   help="conjugate by a seeded random rotation")
    _common_args(s)
    s.set_defaults(fn=_cmd_synthetic)

    s = subs.add_parser("nuclear-norm", help="Gramian of a MatrixMarket file")
    s.add_argument("--matrix", required=True, help="MatrixMarket path")
    _common_args(s)
    s.set_defaults(fn=_cmd_nuclear_norm, functions="sqrt")

    s = subs.add_parser("kernel-logdet", help="kernel matrix log-determinant")
    s.add_argument("--points", required=True,
                   help="CSV point cloud, one coordinate row per point")
    s.add_argument("--kernel", required=True,
                   help="e.g. matern32:l=0.1 or rational-quadratic:l=0.05,alpha=0.25")
    s.add_argument("--noise", type=float, required=True,
                   help="noise variance sigma_n^2 (> 0)")
    s.add_argument("--output-scale", type=float, default=1.0)
    _common_args(s)
    s.set_defaults(fn=_cmd_kernel_logdet, functions="log1p")

    s = subs.add_parser("bounds", help="bound-vs-empirical MSE sweep")
    _add_profile_args(s)
    s.add_argument("--k-grid", default="6,10,16")
    s.add_argument("--trials", type=int, default=5000)
    s.add_argument("--functions", default="identity,log1p,sqrt,ratio:zeta=1")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="out")
    s.set_defaults(fn=_cmd_bounds)

    s = subs.add_parser("report", help="re-render a results CSV as SVG")
    s.add_argument("--csv", required=True)
    s.add_argument("--svg-out", required=True)
    s.add_argument("--title", default="")
    s.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_SPEC if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except bench.GroundTruthUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUTH
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
