"""Command line interface.

Subcommands:

* ``hmx info``   build the H-matrix and print its build report
* ``hmx solve``  run one BiCGSTAB solve and print the solver report
* ``hmx bench``  matvec or solve benchmark, delimited output + figures

All errors print one line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from .bench import BenchConfig, emit_report, run_matvec_bench, run_solver_bench
from .partition import dump_partition
from .plots import render_figures
from .precision import parse_scheme, prepare_scheme
from .problem import export_mesh, right_hand_side
from .solver import SolverConfig, bicgstab

# flags whose comma-list values may start with a minus sign; argparse
# would mistake the bare value for an option, so fold it into --flag=value
_NEGATIVE_OK = ("--c-list", "--voltages")


def _fold_negative_values(argv):
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _NEGATIVE_OK and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _int_list(text: str):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _float_list(text: str):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _str_list(text: str):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _geometry_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("geometry")
    g.add_argument("--spheres", type=int, default=3, help="number of spheres on the x-axis")
    g.add_argument("--refine", type=int, default=2, help="icosahedron refinement level")
    g.add_argument("--spacing", type=float, default=3.0, help="center-to-center distance")
    g.add_argument("--radius", type=float, default=1.0, help="sphere radius")
    g.add_argument("--voltages", type=_float_list, default=None,
                   help="comma list of per-sphere voltages (default: all 1)")
    b = p.add_argument_group("matrix build")
    b.add_argument("--aca-tol", type=float, default=1e-8, help="low-rank stopping tolerance")
    b.add_argument("--leaf", type=int, default=32, help="cluster tree leaf size")
    b.add_argument("--eta", type=float, default=2.0, help="admissibility parameter")
    b.add_argument("--max-rank", type=int, default=None, help="rank budget per block")
    return p


def _bench_config(args, schemes_required=True) -> BenchConfig:
    kwargs = dict(
        spheres=args.spheres, refinement=args.refine, spacing=args.spacing,
        radius=args.radius, voltages=args.voltages,
        aca_tol=args.aca_tol, leaf_size=args.leaf, eta=args.eta,
        max_rank=args.max_rank,
    )
    if schemes_required:
        kwargs.update(
            schemes=args.schemes, c_list=args.c_list, threads=args.threads,
            reps=args.reps, sets=args.sets, seed=args.seed,
            tol=args.tol, max_iter=args.max_iter,
        )
    return BenchConfig(**kwargs)


def _cmd_info(args) -> int:
    from .bench import build_problem

    mesh, h = build_problem(_bench_config(args, schemes_required=False))
    report = h.report
    if args.dump_partition:
        dump_partition(h.partition, args.dump_partition)
    if args.export_mesh:
        export_mesh(mesh, args.export_mesh)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
        return 0
    print(f"panels: {report.n}")
    print(f"spheres: {args.spheres} (refinement {args.refine}, spacing {args.spacing})")
    print(f"blocks: {report.dense_blocks + report.lowrank_blocks} "
          f"({report.dense_blocks} dense, {report.lowrank_blocks} low-rank, "
          f"{report.fallback_blocks} fallbacks)")
    hist = " ".join(f"{r}:{c}" for r, c in sorted(report.rank_histogram.items()))
    print(f"rank histogram: {hist or '(none)'}")
    print(f"stored scalars: {report.stored_scalars} "
          f"(compression ratio {report.compression_ratio:.4f})")
    print(f"aca tol: {report.aca_tol:g}")
    if args.dump_partition:
        print(f"partition dumped to {args.dump_partition}")
    if args.export_mesh:
        print(f"mesh exported to {args.export_mesh}")
    return 0


def _cmd_solve(args) -> int:
    from .bench import build_problem

    mesh, h = build_problem(_bench_config(args, schemes_required=False))
    scheme = parse_scheme(args.scheme)
    sh = prepare_scheme(h, scheme)
    b = right_hand_side(mesh)
    cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter, threads=args.threads)
    x, report = bicgstab(sh, h, b, cfg)
    if args.json:
        out = asdict(report)
        out["solution_norm"] = float(np.linalg.norm(x))
        print(json.dumps(out, indent=2))
    else:
        print(f"scheme: {report.scheme}")
        print(f"converged: {report.converged}")
        print(f"iterations: {report.iterations}")
        res = report.true_residual
        print(f"true residual: {res if res is not None else 'not evaluated'}")
        print(f"wall time: {report.wall_time_s:.3f} s")
        if report.breakdown:
            print(f"breakdown: {report.breakdown}")
    return 0 if report.converged else 3


def _cmd_bench(args) -> int:
    cfg = _bench_config(args)
    runner = run_matvec_bench if args.mode == "matvec" else run_solver_bench
    records = runner(cfg)
    text = emit_report(records, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
        return 0
    print(f"wrote {len(records)} records to {args.out}")
    if not args.no_plot:
        for path in render_figures(records, args.out, args.mode):
            print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    geo = _geometry_parser()
    parser = argparse.ArgumentParser(
        prog="hmx",
        description="Mixed-precision H-matrix kernels on a multi-sphere "
                    "capacitance problem.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_info = sub.add_parser("info", parents=[geo],
                            help="build the H-matrix and print its report")
    p_info.add_argument("--json", action="store_true", help="machine readable output")
    p_info.add_argument("--dump-partition", metavar="PATH", default=None,
                        help="write block index ranges to a file")
    p_info.add_argument("--export-mesh", metavar="PATH", default=None,
                        help="write panel centroids/areas to a file")
    p_info.set_defaults(func=_cmd_info)

    p_solve = sub.add_parser("solve", parents=[geo],
                             help="run one BiCGSTAB solve")
    p_solve.add_argument("--scheme", default="m1-double", help="precision scheme name")
    p_solve.add_argument("--tol", type=float, default=1e-6)
    p_solve.add_argument("--max-iter", type=int, default=1000)
    p_solve.add_argument("--threads", type=int, default=1)
    p_solve.add_argument("--json", action="store_true", help="machine readable output")
    p_solve.set_defaults(func=_cmd_solve)

    p_bench = sub.add_parser("bench", parents=[geo],
                             help="run a benchmark sweep")
    p_bench.add_argument("mode", choices=("matvec", "solve"))
    p_bench.add_argument("--schemes", type=_str_list, default=("all",),
                         help="comma list of scheme names, or 'all' for the "
                              "six fixed schemes")
    p_bench.add_argument("--c-list", type=_int_list, default=(),
                         help="comma list of split parameters, adds m3:c=<c> runs")
    p_bench.add_argument("--threads", type=_int_list, default=(1,),
                         help="comma list of thread counts")
    p_bench.add_argument("--reps", type=int, default=1000,
                         help="products per timing set (matvec mode)")
    p_bench.add_argument("--sets", type=int, default=10, help="timing sets")
    p_bench.add_argument("--seed", type=int, default=42, help="source vector seed")
    p_bench.add_argument("--tol", type=float, default=1e-6)
    p_bench.add_argument("--max-iter", type=int, default=1000)
    p_bench.add_argument("--format", choices=("csv", "json"), default="csv")
    p_bench.add_argument("--out", metavar="PATH", default=None,
                         help="output file (default: stdout)")
    p_bench.add_argument("--no-plot", action="store_true",
                         help="skip figure rendering next to --out")
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(_fold_negative_values(list(argv)))
    try:
        return args.func(args)
    except (ValueError, OverflowError, FloatingPointError, OSError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
