"""Timing grids for the independent solvers and the random-walk risk experiment."""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baselines import bin_sampler, brute_force, monte_carlo, solve_boncelet
from .dependent import MarkovChain, chain_sampler, sharpe_kernel, solve_markov_chain
from .errors import NumericalCheckError, QueryValidationError, ResourceLimitError
from .query import OrderQuery, validate_and_canonicalize
from .spill import solve_independent

BENCH_HEADER = ["algorithm", "n", "d", "c", "rep", "wall_time_seconds", "result"]
SUMMARY_HEADER = ["algorithm", "n", "d", "c", "median_wall_time_seconds", "result", "status"]
RANDOMWALK_HEADER = ["horizon", "exact_probability", "mc_estimate", "mc_stderr"]
EXACT_ALGORITHMS = ("spill", "boncelet", "brute")
AGREE_TOL = 1e-10

# loss unit chosen so the 4 bp/day portfolio still fits a trinomial step
WALK_UNIT_BP = 64.0
WALK_PRESETS = {"safest": 1.0, "safe": 2.0, "risky": 3.0, "riskiest": 4.0}
WALK_PERCENTILES = ("0.90", "0.95", "0.99")
WALK_THRESHOLDS = (3.0, 5.0, 10.0)
WALK_HORIZONS = tuple(range(30, 366, 30))


@dataclass
class BenchRecord:
    algorithm: str
    n: int
    d: int
    c: tuple[int, ...]
    rep: int
    wall_time_seconds: float | None
    result: float | None
    status: str = "ok"
    options: dict = field(default_factory=dict)

    def row(self) -> list[str]:
        return [
            self.algorithm,
            str(self.n),
            str(self.d),
            " ".join(map(str, self.c)),
            str(self.rep),
            "" if self.wall_time_seconds is None else f"{self.wall_time_seconds:.6e}",
            self.status if self.result is None else format(self.result, ".17g"),
        ]


def bench_instance(n: int, c: Sequence[int], seed: int = 0) -> tuple[OrderQuery, np.ndarray]:
    """Seeded non-identical bin probabilities for a timing cell."""
    d = len(c)
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, d, *c]))
    p = rng.dirichlet(np.ones(d + 1), size=n)
    p /= p.sum(axis=1, keepdims=True)
    return validate_and_canonicalize(c, range(1, d + 1), n), p


def _runner(algorithm: str, prune: bool, precompute_sums: bool, trials: int, seed: int,
            boncelet_cap: int) -> Callable[[OrderQuery, np.ndarray], float]:
    if algorithm == "spill":
        return lambda q, p: solve_independent(q, p, prune=prune, precompute_sums=precompute_sums)
    if algorithm == "boncelet":
        return lambda q, p: solve_boncelet(q, p, max_entries=boncelet_cap)
    if algorithm == "brute":
        return brute_force
    if algorithm == "mc":
        return lambda q, p: monte_carlo(q, bin_sampler(p, q.x), trials, seed).estimate
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_cell(algorithm: str, n: int, c: Sequence[int], reps: int, *, seed: int = 0, prune: bool = True,
             precompute_sums: bool = False, trials: int = 10000, boncelet_cap: int = 10**8) -> list[BenchRecord]:
    c = tuple(c)
    opts = {"prune": prune, "precompute_sums": precompute_sums}
    if len(c) > n or c[-1] > n:
        return [BenchRecord(algorithm, n, len(c), c, 0, None, None, "skipped", opts)]
    query, p = bench_instance(n, c, seed)
    solve = _runner(algorithm, prune, precompute_sums, trials, seed, boncelet_cap)
    out = []
    for rep in range(reps):
        try:
            t0 = time.perf_counter()
            value = solve(query, p)
            dt = time.perf_counter() - t0
        except ResourceLimitError:
            return [BenchRecord(algorithm, n, len(c), c, 0, None, None, "skipped", opts)]
        out.append(BenchRecord(algorithm, n, len(c), c, rep, dt, value, "ok", opts))
    return out


def run_bench(
    n_list: Sequence[int],
    d_list: Sequence[int],
    algorithms: Sequence[str],
    reps: int = 3,
    *,
    c: Sequence[int] | None = None,
    seed: int = 0,
    prune: bool = True,
    precompute_sums: bool = False,
    trials: int = 10000,
    boncelet_cap: int = 10**8,
    parallel_cells: int = 1,
) -> list[BenchRecord]:
    """Time every ``(algorithm, n, C)`` cell; ``C = (1..d)`` unless ``c`` is fixed.

    Exact algorithms sharing a cell must agree within ``1e-10``.
    """
    cells = []
    for n in n_list:
        for cc in ([tuple(c)] if c is not None else [tuple(range(1, d + 1)) for d in d_list]):
            for alg in algorithms:
                cells.append((alg, n, cc))

    def go(cell):
        alg, n, cc = cell
        return run_cell(alg, n, cc, reps, seed=seed, prune=prune, precompute_sums=precompute_sums,
                        trials=trials, boncelet_cap=boncelet_cap)

    if parallel_cells > 1:
        with ThreadPoolExecutor(max_workers=parallel_cells) as pool:
            chunks = list(pool.map(go, cells))
    else:
        chunks = [go(cell) for cell in cells]
    records = [r for chunk in chunks for r in chunk]
    check_agreement(records)
    return records


def check_agreement(records: Sequence[BenchRecord], tol: float = AGREE_TOL) -> None:
    by_cell: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        if r.status == "ok" and r.algorithm in EXACT_ALGORITHMS:
            by_cell.setdefault((r.n, r.c), []).append(r)
    for (n, c), rs in by_cell.items():
        vals = [r.result for r in rs]
        if max(vals) - min(vals) > tol:
            detail = ", ".join(f"{r.algorithm}={r.result!r}" for r in rs)
            raise NumericalCheckError(f"cell n={n} c={c} disagrees: {detail}")


def summarize(records: Sequence[BenchRecord]) -> list[list[str]]:
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        groups.setdefault((r.algorithm, r.n, r.c), []).append(r)
    rows = []
    for (alg, n, c), rs in groups.items():
        if rs[0].status != "ok":
            rows.append([alg, str(n), str(len(c)), " ".join(map(str, c)), "", "", rs[0].status])
            continue
        med = statistics.median(r.wall_time_seconds for r in rs)
        rows.append([alg, str(n), str(len(c)), " ".join(map(str, c)), f"{med:.6e}",
                     format(rs[0].result, ".17g"), "ok"])
    return rows


def write_bench_csv(records: Sequence[BenchRecord], path: str | Path) -> Path:
    """Write per-repetition rows to ``path`` and medians to ``<stem>.summary.csv``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        w.writerows(r.row() for r in records)
    summary = path.with_name(path.stem + ".summary.csv")
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summarize(records))
    return summary


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def median_time(fn: Callable[[], object], reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


# --- random-walk experiment -------------------------------------------------


def percentile_indices(n: int, percentiles: Sequence, thresholds: Sequence[float]) -> tuple[list[int], list[float]]:
    """``c_j = floor(q_j * n)`` computed exactly; drops ``c_j = 0`` and merges repeats.

    A repeated index keeps the smallest of its thresholds.
    """
    merged: dict[int, float] = {}
    for q, x in zip(percentiles, thresholds):
        try:
            frac = Fraction(str(q))
        except ValueError:
            raise QueryValidationError(f"percentile {q!r} is not a number") from None
        if not 0 < frac <= 1:
            raise QueryValidationError(f"percentile {q} must lie in (0, 1]")
        cj = math.floor(frac * n)
        if cj < 1:
            continue
        cj = min(cj, n)
        merged[cj] = min(x, merged.get(cj, math.inf))
    c = sorted(merged)
    return c, [merged[k] for k in c]


def walk_kernel(preset: str) -> tuple[float, float, float]:
    return sharpe_kernel(WALK_PRESETS[preset], sharpe=1.0, unit_bp=WALK_UNIT_BP)


def run_randomwalk(
    kernel: Sequence[float],
    horizons: Sequence[int] = WALK_HORIZONS,
    percentiles: Sequence = WALK_PERCENTILES,
    thresholds: Sequence[float] = WALK_THRESHOLDS,
    trials: int = 10000,
    seed: int = 0,
    initial: int = 0,
    prune: bool = True,
) -> list[tuple[int, float, float, float]]:
    """Exact and Monte Carlo joint order-statistic CDF of a trinomial loss walk."""
    q_dn, q_0, q_up = kernel
    rows = []
    for n in horizons:
        c, x = percentile_indices(n, percentiles, thresholds)
        query = validate_and_canonicalize(c, x, n)
        chain = MarkovChain.random_walk(q_dn, q_0, q_up, n=n, initial=initial)
        exact = solve_markov_chain(chain, query, prune=prune)
        mc_seed = int(np.random.SeedSequence([seed, n]).generate_state(1)[0])
        mc = monte_carlo(query, chain_sampler(chain, n), trials, mc_seed)
        rows.append((n, exact, mc.estimate, mc.stderr))
    return rows


def write_randomwalk_csv(rows, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANDOMWALK_HEADER)
        for n, exact, est, se in rows:
            w.writerow([n, format(exact, ".17g"), format(est, ".17g"), format(se, ".17g")])
