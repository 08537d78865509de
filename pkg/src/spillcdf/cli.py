"""Command-line entry point: ``spillcdf {compute,bench,randomwalk}``.

Exit codes: 0 ok, 2 parse or validation error, 3 resource limit or
unwritable output, 4 numerical cross-check failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .baselines import MonteCarloResult
from .errors import NumericalCheckError, QueryValidationError, ResourceLimitError
from .problem import ALGORITHMS, load_problem, oracle_feasible, solve

log = logging.getLogger("spillcdf")

EXIT_OK, EXIT_PARSE, EXIT_RESOURCE, EXIT_NUMERIC = 0, 2, 3, 4
CROSS_TOL = 1e-10
MC_SIGMAS = 4.0


def _fmt(v: float) -> str:
    return format(v, ".17g")


def _add_prune(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prune", dest="prune", action="store_true", default=None,
                   help="skip states that can no longer reach acceptance (default)")
    p.add_argument("--no-prune", dest="prune", action="store_false")
    p.add_argument("--precompute-sums", action="store_true", default=None)


def cmd_compute(args: argparse.Namespace) -> int:
    prob = load_problem(args.spec)
    if args.algorithm:
        prob.algorithm = args.algorithm
    if args.trials is not None:
        prob.trials = args.trials
    if args.seed is not None:
        prob.seed = args.seed
    if args.prune is not None:
        prob.options["prune"] = args.prune
    if args.precompute_sums:
        prob.options["precompute_sums"] = True
    if args.workers is not None:
        prob.options["workers"] = args.workers

    res = solve(prob)
    value = res.estimate if isinstance(res, MonteCarloResult) else res
    print(f"probability={_fmt(value)}")
    if isinstance(res, MonteCarloResult):
        print(f"stderr={_fmt(res.stderr)}")

    if args.cross_check:
        if oracle_feasible(prob) and prob.algorithm != "brute":
            ref = solve(prob, "brute")
            diff = abs(value - ref)
            tol = MC_SIGMAS * res.stderr + CROSS_TOL if isinstance(res, MonteCarloResult) else CROSS_TOL
            print(f"oracle=brute probability={_fmt(ref)} abs_diff={diff:.3e} tol={tol:.3e}")
        else:
            mc = solve(prob, "mc") if prob.algorithm != "mc" else res
            ref = mc.estimate
            diff = abs(value - ref)
            tol = MC_SIGMAS * mc.stderr + CROSS_TOL
            print(f"oracle=mc probability={_fmt(ref)} stderr={_fmt(mc.stderr)} abs_diff={diff:.3e} tol={tol:.3e}")
        if diff > tol:
            raise NumericalCheckError(f"cross-check failed: |{value} - {ref}| = {diff:.3e} > {tol:.3e}")
        print("cross_check=pass")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    records = bench.run_bench(
        args.n, args.d, args.algorithms, args.reps,
        c=args.c, seed=args.seed,
        prune=True if args.prune is None else args.prune,
        precompute_sums=bool(args.precompute_sums),
        trials=args.trials, boncelet_cap=args.boncelet_cap,
        parallel_cells=args.parallel_cells,
    )
    try:
        summary = bench.write_bench_csv(records, args.out)
    except OSError as exc:
        raise ResourceLimitError(f"cannot write {args.out}: {exc}") from None
    for row in bench.summarize(records):
        print(",".join(row))
    log.info("wrote %s and %s", args.out, summary)
    return EXIT_OK


def cmd_randomwalk(args: argparse.Namespace) -> int:
    if args.kernel is not None:
        kernel = tuple(args.kernel)
    else:
        kernel = bench.walk_kernel(args.preset)
    if len(args.percentiles) != len(args.thresholds):
        raise QueryValidationError("--percentiles and --thresholds must have the same length")
    rows = bench.run_randomwalk(
        kernel, args.horizons, args.percentiles, args.thresholds,
        trials=args.trials, seed=args.seed, initial=args.initial,
        prune=True if args.prune is None else args.prune,
    )
    if args.out:
        try:
            bench.write_randomwalk_csv(rows, args.out)
        except OSError as exc:
            raise ResourceLimitError(f"cannot write {args.out}: {exc}") from None
    print(",".join(bench.RANDOMWALK_HEADER))
    for n, exact, est, se in rows:
        print(f"{n},{_fmt(exact)},{_fmt(est)},{_fmt(se)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spillcdf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="evaluate one problem file")
    p.add_argument("spec", help="JSON problem file")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--cross-check", action="store_true")
    _add_prune(p)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("bench", help="time solvers over an (n, d) grid")
    p.add_argument("--n", type=int, nargs="+", default=[6, 12, 18, 24, 30])
    p.add_argument("--d", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--c", type=int, nargs="+", help="fixed index vector instead of C = (1..d)")
    p.add_argument("--algorithms", nargs="+", default=["spill", "boncelet"],
                   choices=["spill", "boncelet", "brute", "mc"])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boncelet-cap", type=int, default=10**8)
    p.add_argument("--parallel-cells", type=int, default=1)
    p.add_argument("--out", default="bench.csv")
    _add_prune(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("randomwalk", help="exact vs Monte Carlo risk of a trinomial loss walk")
    k = p.add_mutually_exclusive_group()
    k.add_argument("--kernel", type=float, nargs=3, metavar=("Q_DN", "Q_0", "Q_UP"))
    k.add_argument("--preset", choices=sorted(bench.WALK_PRESETS), default="risky")
    p.add_argument("--horizons", type=int, nargs="+", default=list(bench.WALK_HORIZONS))
    p.add_argument("--percentiles", nargs="+", default=list(bench.WALK_PERCENTILES))
    p.add_argument("--thresholds", type=float, nargs="+", default=list(bench.WALK_THRESHOLDS))
    p.add_argument("--initial", type=int, default=0)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_prune(p)
    p.set_defaults(func=cmd_randomwalk)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except QueryValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
