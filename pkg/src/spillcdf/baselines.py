"""Reference algorithms: full-configuration DP, exhaustive enumeration and
seeded Monte Carlo.  They double as correctness oracles and as benchmark
comparators for the spilling solver."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import QueryValidationError, ResourceLimitError
from .query import OrderQuery, check_probability_matrix

DEFAULT_TABLE_CAP = 10**8
DEFAULT_ENUM_CAP = 10**7
MC_BLOCK = 4096


def _check_matrix(query: OrderQuery, p: np.ndarray) -> np.ndarray:
    p = check_probability_matrix(p, width=query.d + 1)
    if p.shape[0] != query.n:
        raise QueryValidationError(f"matrix has {p.shape[0]} rows, query has n={query.n}")
    return p


def simplex_configs(n: int, d: int) -> np.ndarray:
    """All ``k`` in ``N^d`` with ``sum(k) <= n``, lexicographic with ``k_1`` slowest."""
    rows = np.zeros((1, 0), dtype=np.int64)
    sums = np.zeros(1, dtype=np.int64)
    for _ in range(d):
        counts = n - sums + 1
        rep = np.repeat(np.arange(rows.shape[0]), counts)
        starts = np.cumsum(counts) - counts
        col = np.arange(rep.size) - np.repeat(starts, counts)
        rows = np.column_stack([rows[rep], col])
        sums = sums[rep] + col
    return rows


def boncelet_table_size(n: int, d: int) -> int:
    return math.comb(n + d, d)


def solve_boncelet(query: OrderQuery, p: np.ndarray, max_entries: int = DEFAULT_TABLE_CAP) -> float:
    """Track the exact bin-count vector ``C_i`` of the first ``i`` balls.

    The table is stored over the simplex ``{k : sum(k) <= n}`` rather than the
    full ``(n+1)^d`` box.  The answer sums ``P(C_n = k)`` over ``k`` with
    ``k_1 + ... + k_j >= c_j`` for every ``j``.
    """
    p = _check_matrix(query, p)
    n, d = query.n, query.d
    size = boncelet_table_size(n, d)
    if size > max_entries:
        raise ResourceLimitError(f"Boncelet table needs {size} entries (cap {max_entries})")
    if d * math.log2(n + 1) >= 62:
        raise ResourceLimitError("configuration codes would overflow 64-bit integers")

    k = simplex_configs(n, d)
    weights = (n + 1) ** np.arange(d - 1, -1, -1, dtype=np.int64)
    codes = k @ weights
    preds = []
    for j in range(d):
        has = k[:, j] > 0
        src = np.searchsorted(codes, codes - weights[j])
        preds.append((has, np.where(has, src, 0)))

    table = np.zeros(size)
    table[0] = 1.0
    for i in range(n):
        row = p[i]
        new = table * row[d]
        for j, (has, src) in enumerate(preds):
            new = new + np.where(has, table[src] * row[j], 0.0)
        table = new

    ok = np.all(np.cumsum(k, axis=1) >= np.asarray(query.c)[None, :], axis=1)
    return float(table[ok].sum())


def brute_force(query: OrderQuery, p: np.ndarray, max_assignments: int = DEFAULT_ENUM_CAP) -> float:
    """Sum ``prod_i p[i, a_i]`` over every bin assignment ``a`` meeting all bin conditions."""
    p = _check_matrix(query, p)
    n, d = query.n, query.d
    base = d + 1
    total = base**n
    if total > max_assignments:
        raise ResourceLimitError(f"{total} assignments exceed the enumeration cap {max_assignments}")
    c = np.asarray(query.c)
    powers = base ** np.arange(n, dtype=np.int64)
    parts = []
    for start in range(0, total, 1 << 16):
        codes = np.arange(start, min(total, start + (1 << 16)), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % base  # bin of ball i, 0-based
        w = np.prod(p[np.arange(n)[None, :], digits], axis=1)
        counts = np.stack([(digits == j).sum(axis=1) for j in range(d)], axis=1)
        ok = np.all(np.cumsum(counts, axis=1) >= c[None, :], axis=1)
        parts.append(float(w[ok].sum()))
    return math.fsum(parts)


def order_constraints_hold(samples: np.ndarray, query: OrderQuery) -> np.ndarray:
    """Row-wise check of ``X_(c_j) <= x_j`` for every ``j``."""
    srt = np.sort(samples, axis=1)
    picked = srt[:, np.asarray(query.c) - 1]
    return np.all(picked <= np.asarray(query.x)[None, :], axis=1)


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    stderr: float
    trials: int
    hits: int


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of trials."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def monte_carlo(
    query: OrderQuery,
    sampler: Sampler,
    trials: int,
    seed: int,
    workers: int = 1,
) -> MonteCarloResult:
    """Fraction of sampled vectors satisfying every order-statistic constraint.

    ``sampler(rng, m)`` returns an ``m x n`` array.  Trials are split into fixed
    blocks, each with its own stream, so the result does not depend on
    ``workers``.
    """
    if trials < 1:
        raise QueryValidationError("trials must be at least 1")
    blocks = [(b, min(MC_BLOCK, trials - b * MC_BLOCK)) for b in range(-(-trials // MC_BLOCK))]

    def run(block: tuple[int, int]) -> int:
        b, m = block
        xs = np.asarray(sampler(block_rng(seed, b), m), dtype=float)
        if xs.shape != (m, query.n):
            raise QueryValidationError(f"sampler returned shape {xs.shape}, expected {(m, query.n)}")
        return int(order_constraints_hold(xs, query).sum())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(run, blocks))
    else:
        hits = sum(run(b) for b in blocks)
    est = hits / trials
    return MonteCarloResult(est, math.sqrt(est * (1.0 - est) / trials), trials, hits)


def independent_sampler(dists: Sequence) -> Sampler:
    dists = list(dists)

    def sample(rng: np.random.Generator, m: int) -> np.ndarray:
        return np.column_stack([dist.sample(rng, m) for dist in dists])

    return sample


def bin_sampler(p: np.ndarray, x: Sequence[float]) -> Sampler:
    """Sampler that places variable ``i`` at a representative point of its bin.

    Useful when only the bin-probability matrix is known: bin ``j`` maps to
    ``x_j`` itself and the tail bin to ``+inf``, which preserves every
    ``X_(c_j) <= x_j`` event.
    """
    p = np.asarray(p, dtype=float)
    reps = np.array(list(x) + [np.inf])
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0

    def sample(rng: np.random.Generator, m: int) -> np.ndarray:
        u = rng.random((m, p.shape[0]))
        bins = (u[:, :, None] >= cum[None, :, :]).sum(axis=2)
        return reps[np.minimum(bins, p.shape[1] - 1)]

    return sample
