"""Spilling DP for dependent variables arranged in a Markov random field.

Each bin is cut into ``H`` micro-bins.  Besides the spill state, step ``i``
remembers the micro-bin of every already-thrown variable that still has a
neighbor among the variables yet to come (the *boundary set*).  By the local
Markov property that is all the memory needed to produce the conditional
distribution of later variables.

Variables are visited in index order ``1..n``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import sparse

from .distributions import ConditionalProvider
from .errors import InvalidDistributionError, QueryValidationError, ResourceLimitError
from .query import OrderQuery, compute_deltas
from .spill import layout_for, sigma

DEFAULT_JOINT_CAP = 5 * 10**7
DEFAULT_PATH_CAP = 10**7

Pair = tuple[int, int]


# --- micro-bins -------------------------------------------------------------


@dataclass(frozen=True)
class MicroBinSpec:
    """``bounds[j-1]`` holds the ``H + 1`` micro-bounds of bin ``j``.

    Micro-bin ``(j, h)`` is ``(bounds[j-1, h-1], bounds[j-1, h]]`` and has flat
    index ``(j-1) * H + (h-1)``.
    """

    x: tuple[float, ...]
    H: int
    bounds: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = len(self.x)
        b = np.asarray(self.bounds, dtype=float)
        if self.H < 1 or b.shape != (d + 1, self.H + 1):
            raise QueryValidationError(f"micro-bounds must have shape {(d + 1, self.H + 1)}, got {b.shape}")
        edges = (-math.inf, *self.x, math.inf)
        for j in range(d + 1):
            if b[j, 0] != edges[j] or b[j, -1] != edges[j + 1] or np.any(b[j, 1:] < b[j, :-1]):
                raise QueryValidationError(f"micro-bounds of bin {j + 1} do not partition it")
        b.setflags(write=False)
        object.__setattr__(self, "bounds", b)

    @property
    def d(self) -> int:
        return len(self.x)

    @property
    def n_micro(self) -> int:
        return (self.d + 1) * self.H

    def pair(self, m: int) -> Pair:
        return (m // self.H + 1, m % self.H + 1)

    def flat(self, pair: Pair) -> int:
        j, h = pair
        if not (1 <= j <= self.d + 1 and 1 <= h <= self.H):
            raise QueryValidationError(f"micro-bin {pair} out of range")
        return (j - 1) * self.H + (h - 1)

    def locate(self, value: float) -> int:
        """Flat index of the micro-bin containing ``value``."""
        j0 = int(np.searchsorted(self.x, value, side="left"))
        h0 = int(np.searchsorted(self.bounds[j0, 1:], value, side="left"))
        return j0 * self.H + min(h0, self.H - 1)

    def micro_row(self, provider) -> np.ndarray:
        """Unconditional micro-bin masses of a CDF provider."""
        f = np.array([[provider.cdf(t) for t in row] for row in self.bounds])
        return np.clip(np.diff(f, axis=1), 0.0, None).ravel()

    @classmethod
    def uniform(cls, x: Sequence[float], H: int, lo: float | None = None, hi: float | None = None) -> "MicroBinSpec":
        """Equal-width split of every finite bin.

        The two unbounded end bins are split between ``lo`` (``hi``) and the
        adjacent threshold, with the outermost micro-bin running to infinity.
        """
        x = tuple(float(v) for v in x)
        d = len(x)
        lo = x[0] - 1.0 if lo is None else float(lo)
        hi = x[-1] + 1.0 if hi is None else float(hi)
        if not (lo < x[0] and hi > x[-1]):
            raise QueryValidationError("lo/hi must lie strictly outside the thresholds")
        edges = (lo, *x, hi)
        rows = []
        for j in range(d + 1):
            if j == 0:
                row = [-math.inf, *np.linspace(lo, x[0], H)] if H > 1 else [-math.inf, x[0]]
            elif j == d:
                row = [*np.linspace(x[-1], hi, H), math.inf] if H > 1 else [x[-1], math.inf]
            else:
                row = list(np.linspace(edges[j], edges[j + 1], H + 1))
            rows.append(row)
        return cls(x, H, np.array(rows))

    @classmethod
    def from_support(cls, x: Sequence[float], support: Iterable[float]) -> "MicroBinSpec":
        """One micro-bin per support point; ``H`` is the largest per-bin count.

        Bins with fewer points are padded with empty micro-bins at their right end.
        """
        x = tuple(float(v) for v in x)
        d = len(x)
        pts = np.unique(np.asarray(list(support), dtype=float))
        which = np.searchsorted(x, pts, side="left")
        groups = [pts[which == j] for j in range(d + 1)]
        H = max(1, max(len(g) for g in groups))
        edges = (-math.inf, *x, math.inf)
        rows = []
        for j, g in enumerate(groups):
            inner = list(g[:-1]) if len(g) else []
            row = [edges[j], *inner] + [edges[j + 1]] * (H + 1 - 1 - len(inner))
            rows.append(row)
        return cls(x, H, np.array(rows, dtype=float))


# --- schedule ---------------------------------------------------------------


@dataclass(frozen=True)
class DependencySchedule:
    """Neighbor and boundary sets for visiting variables in order ``1..n``.

    ``nbr[i]`` and ``bnd[i]`` are sorted tuples of 1-based variable indices;
    index 0 is unused and ``bnd[n+1]`` is empty.
    """

    n: int
    edges: frozenset
    nbr: tuple[tuple[int, ...], ...]
    bnd: tuple[tuple[int, ...], ...]

    @property
    def b_star(self) -> int:
        return max(len(b) for b in self.bnd)

    def tracked(self, i: int) -> bool:
        """Whether variable ``i`` must be remembered after it is thrown."""
        return i in self.bnd[i + 1]


def boundary_sets(edges: Iterable[tuple[int, int]], n: int) -> DependencySchedule:
    adj: list[set[int]] = [set() for _ in range(n + 1)]
    norm = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            raise QueryValidationError(f"self-loop on variable {a}")
        if not (1 <= a <= n and 1 <= b <= n):
            raise QueryValidationError(f"edge ({a}, {b}) references a variable outside 1..{n}")
        adj[a].add(b)
        adj[b].add(a)
        norm.add((min(a, b), max(a, b)))
    # last[j] = largest neighbor index of j
    last = [max(adj[j], default=0) for j in range(n + 1)]
    nbr = [()] + [tuple(sorted(j for j in adj[i] if j < i)) for i in range(1, n + 1)]
    bnd = [()] + [tuple(j for j in range(1, i) if last[j] >= i) for i in range(1, n + 2)]
    return DependencySchedule(n, frozenset(norm), tuple(nbr), tuple(bnd))


def chain_schedule(n: int) -> DependencySchedule:
    return boundary_sets(((i, i + 1) for i in range(1, n)), n)


# --- psi / gamma ------------------------------------------------------------


def _psi_codes(schedule: DependencySchedule, n_micro: int, i: int, target: Sequence[int]) -> list[tuple[int, ...]]:
    prev_members = schedule.bnd[i]
    next_members = schedule.bnd[i + 1]
    pos_next = {v: k for k, v in enumerate(next_members)}
    choices = [
        (target[pos_next[v]],) if v in pos_next else range(n_micro)
        for v in prev_members
    ]
    return list(itertools.product(*choices))


def psi(
    schedule: DependencySchedule,
    micro: MicroBinSpec,
    i: int,
    target_boundary: Sequence[Pair],
    kappa: Sequence[int] | None = None,
) -> list[tuple[Pair, ...]]:
    """Step-``i`` boundary states consistent with a step-``i+1`` boundary state.

    Shared variables are pinned to their coordinate in ``target_boundary``;
    variables retiring at step ``i`` range over every micro-bin.  ``kappa`` is
    accepted for symmetry but not used: states incompatible with it carry
    zero mass in the table anyway.
    """
    if len(target_boundary) != len(schedule.bnd[i + 1]):
        raise QueryValidationError(f"target boundary must have {len(schedule.bnd[i + 1])} entries")
    codes = _psi_codes(schedule, micro.n_micro, i, [micro.flat(p) for p in target_boundary])
    return [tuple(micro.pair(m) for m in st) for st in codes]


def _neighbor_locations(schedule: DependencySchedule, i: int, prior: Sequence) -> tuple:
    pos = {v: k for k, v in enumerate(schedule.bnd[i])}
    return tuple(prior[pos[v]] for v in schedule.nbr[i])


def gamma(
    schedule: DependencySchedule,
    micro: MicroBinSpec,
    i: int,
    target_boundary: Sequence[Pair],
    prior_boundary: Sequence[Pair],
    kappa: Sequence[int],
    target_bin: int,
    cond: ConditionalProvider,
    deltas: Sequence[int],
) -> float:
    """Probability that ball ``i`` ends up in ``target_bin`` consistently with both boundaries.

    If ball ``i`` is remembered, its micro-bin is read from ``target_boundary``
    and the mass counts only when that bin feeds ``target_bin`` given
    ``kappa``.  Otherwise the masses of every feeding bin are summed.
    """
    nbrs = _neighbor_locations(schedule, i, prior_boundary)
    q = cond(i, nbrs)
    feeders = sigma(target_bin, kappa, deltas)
    if schedule.tracked(i):
        jh, hh = target_boundary[-1]
        return float(q[micro.flat((jh, hh))]) if jh in feeders else 0.0
    H = micro.H
    total = 0.0
    for jp in feeders:
        total += float(sum(q[(jp - 1) * H : jp * H]))
    return total


# --- general solver ---------------------------------------------------------


@dataclass
class JointTable:
    """``values[row, kappa]``: rows enumerate boundary states lexicographically."""

    members: tuple[int, ...]
    n_micro: int
    deltas: tuple[int, ...]
    values: np.ndarray

    def total(self) -> float:
        return float(self.values.sum())

    def row_of(self, codes: Sequence[int]) -> int:
        r = 0
        for m in codes:
            r = r * self.n_micro + m
        return r


def _macro_masses(q: np.ndarray, d: int, H: int) -> list[float]:
    out = []
    for j in range(d + 1):
        acc = 0.0
        for h in range(H):
            acc = acc + float(q[j * H + h])
        out.append(acc)
    return out


def iter_dependent_tables(
    query: OrderQuery,
    micro: MicroBinSpec,
    schedule: DependencySchedule,
    cond: ConditionalProvider,
    prune: bool = True,
    max_entries: int = DEFAULT_JOINT_CAP,
    workers: int = 1,
) -> Iterator[JointTable]:
    n, d = query.n, query.d
    if schedule.n != n:
        raise QueryValidationError(f"schedule is for n={schedule.n}, query has n={n}")
    if micro.d != d or tuple(micro.x) != tuple(query.x):
        raise QueryValidationError("micro-bin spec does not match the query thresholds")
    if cond.n_micro != micro.n_micro:
        raise QueryValidationError(f"conditional rows have {cond.n_micro} entries, micro-bins number {micro.n_micro}")
    deltas = compute_deltas(query)
    lay = layout_for(deltas)
    M, H = micro.n_micro, micro.H
    size = lay.size * M**schedule.b_star
    if size > max_entries:
        raise ResourceLimitError(f"joint table needs {size} entries (cap {max_entries})")

    pairs = [micro.pair(m) for m in range(M)]
    table = np.zeros((1, lay.size))
    table[0, 0] = 1.0
    for i in range(1, n + 1):
        prev_members = schedule.bnd[i]
        next_members = schedule.bnd[i + 1]
        tracked = schedule.tracked(i)
        idx = lay.active(n - i if prune else None)
        live = table.any(axis=1)
        memo: dict[tuple, np.ndarray] = {}
        coef_memo: dict[tuple, list[np.ndarray]] = {}
        rs = [lay.run_start[t][idx] for t in range(d + 1)]
        new = np.zeros((M ** len(next_members), lay.size))

        def prior_row(codes: tuple[int, ...]) -> int:
            r = 0
            for m in codes:
                r = r * M + m
            return r

        def conditional(codes: tuple[int, ...]) -> np.ndarray:
            key = _neighbor_locations(schedule, i, codes)
            if key not in memo:
                memo[key] = cond(i, tuple(pairs[m] for m in key))
            return memo[key]

        def coefficients(q: np.ndarray, m_hat: int | None) -> list[np.ndarray] | None:
            if m_hat is None:
                key = ("u", *_macro_masses(q, d, H))
                if key not in coef_memo:
                    coef_memo[key] = lay.coefficients(list(key[1:]), idx, precompute=True)
                return coef_memo[key]
            mass = float(q[m_hat])
            if mass == 0.0:
                return None
            jh = m_hat // H + 1
            return [np.where((rs[t] <= jh) & (jh <= t + 1), mass, 0.0) for t in range(d + 1)]

        def fill(target: tuple[int, ...]) -> None:
            m_hat = target[-1] if tracked else None
            terms = []
            for prior in _psi_codes(schedule, M, i, target):
                r = prior_row(prior)
                if not live[r]:
                    continue
                coefs = coefficients(conditional(prior), m_hat)
                if coefs is not None:
                    terms.append((table[r], coefs))
            if not terms:
                return
            out = np.zeros(idx.size)
            for row, coefs in terms:
                out = out + row[idx] * coefs[d]
            for j in range(d):
                has, src = lay.has_pred[j][idx], lay.pred[j][idx]
                for row, coefs in terms:
                    out = out + np.where(has, row[src] * coefs[j], 0.0)
            new[prior_row(target), idx] = out

        targets = list(itertools.product(range(M), repeat=len(next_members)))
        if workers > 1 and len(targets) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(fill, targets))
        else:
            for target in targets:
                fill(target)
        table = new
        yield JointTable(next_members, M, deltas, table)


def solve_dependent(
    query: OrderQuery,
    micro: MicroBinSpec,
    schedule: DependencySchedule,
    cond: ConditionalProvider,
    prune: bool = True,
    max_entries: int = DEFAULT_JOINT_CAP,
    workers: int = 1,
) -> float:
    """Joint order-statistic CDF for variables with MRF dependencies.

    Exact when each conditional is constant across every micro-bin it is
    conditioned on; otherwise an approximation that sharpens as ``H`` grows.
    """
    table = None
    for table in iter_dependent_tables(query, micro, schedule, cond, prune, max_entries, workers):
        pass
    assert table is not None and table.values.shape[0] == 1
    return float(table.values[0, -1])


# --- Markov chains ----------------------------------------------------------


@dataclass
class MarkovChain:
    """Integer-valued chain on ``lo..hi``.

    ``first`` is the distribution of ``X_1``; ``P[s, t]`` is the probability
    of moving from value ``lo + s`` to ``lo + t``.
    """

    lo: int
    hi: int
    first: np.ndarray
    P: sparse.csr_matrix

    def __post_init__(self):
        V = self.hi - self.lo + 1
        self.first = np.asarray(self.first, dtype=float)
        self.P = sparse.csr_matrix(self.P, dtype=float)
        if V < 1 or self.first.shape != (V,) or self.P.shape != (V, V):
            raise QueryValidationError("chain support, first-step row and kernel shapes disagree")
        rows = np.asarray(self.P.sum(axis=1)).ravel()
        if (
            np.any(self.first < 0)
            or (self.P.data < 0).any()
            or abs(math.fsum(self.first) - 1.0) > 1e-12
            or np.any(np.abs(rows - 1.0) > 1e-12)
        ):
            raise InvalidDistributionError("chain rows must be probability vectors")

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @classmethod
    def from_steps(
        cls,
        offsets: Sequence[int],
        probs: Sequence[float],
        initial: int = 0,
        n: int | None = None,
        bounds: tuple[int, int] | None = None,
    ) -> "MarkovChain":
        """``X_0 = initial`` and ``X_i = X_{i-1} + step`` with i.i.d. integer steps.

        The support is the range reachable in ``n`` steps, intersected with
        ``bounds`` when given.  Moves that would leave the support stay put at
        the edge; within the reachable range this never happens before step ``n``.
        """
        offsets = [int(o) for o in offsets]
        probs = [float(q) for q in probs]
        if len(offsets) != len(probs) or not offsets:
            raise QueryValidationError("offsets and probabilities must be non-empty and equal length")
        if n is None and bounds is None:
            raise QueryValidationError("step kernel needs a horizon n or truncation bounds")
        lo, hi = -math.inf, math.inf
        if n is not None:
            lo = initial + n * min(0, min(offsets))
            hi = initial + n * max(0, max(offsets))
        if bounds is not None:
            lo, hi = max(lo, bounds[0]), min(hi, bounds[1])
        lo, hi = int(lo), int(hi)
        if not lo <= initial <= hi:
            raise QueryValidationError(f"initial value {initial} outside support [{lo}, {hi}]")
        V = hi - lo + 1
        src, dst, val = [], [], []
        for s in range(V):
            for o, q in zip(offsets, probs):
                if q == 0.0:
                    continue
                src.append(s)
                dst.append(min(max(s + o, 0), V - 1))
                val.append(q)
        P = sparse.coo_matrix((val, (src, dst)), shape=(V, V)).tocsr()
        P.sum_duplicates()
        first = np.asarray(P[initial - lo].todense()).ravel()
        return cls(lo, hi, first, P)

    @classmethod
    def random_walk(cls, q_dn: float, q_0: float, q_up: float, n: int, initial: int = 0,
                    bounds: tuple[int, int] | None = None) -> "MarkovChain":
        return cls.from_steps((-1, 0, 1), (q_dn, q_0, q_up), initial, n, bounds)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], lo: int, initial: int | None = None,
                  first: Sequence[float] | None = None) -> "MarkovChain":
        """Explicit kernel over ``lo..lo+len(rows)-1``; give either ``initial`` or ``first``."""
        P = np.asarray(rows, dtype=float)
        V = P.shape[0]
        if (initial is None) == (first is None):
            raise QueryValidationError("give exactly one of an initial value or a first-step distribution")
        if first is None:
            if not lo <= initial < lo + V:
                raise QueryValidationError(f"initial value {initial} outside the kernel support")
            first = P[initial - lo]
        return cls(lo, lo + V - 1, np.asarray(first, dtype=float), P)


def markov_chain_adapter(chain: MarkovChain, query: OrderQuery):
    """Path-graph schedule, exact micro-bins and kernel-backed conditional."""
    values = chain.values
    micro = MicroBinSpec.from_support(query.x, values)
    where = np.array([micro.locate(v) for v in values])
    by_micro = {int(m): s for s, m in enumerate(where)}
    dense = chain.P.toarray()

    def row(i: int, nbrs: tuple) -> np.ndarray:
        out = np.zeros(micro.n_micro)
        if i == 1:
            out[where] = chain.first
            return out
        m = micro.flat(nbrs[0])
        s = by_micro.get(m)
        if s is None:
            out[m] = 1.0  # empty micro-bin: never reached with positive mass
            return out
        out[where] = dense[s]
        return out

    return chain_schedule(query.n), ConditionalProvider(row, micro.n_micro), micro


def solve_markov_chain(chain: MarkovChain, query: OrderQuery, prune: bool = True) -> float:
    """Vectorized specialization of :func:`solve_dependent` for a path graph.

    The table is ``(support value, spill state)``.  Each step first mixes rows
    through the kernel, then applies the spill move of the bin the new value
    falls in.  States that are unreachable (more balls counted than thrown)
    or, with ``prune``, unable to reach acceptance are not stored.
    """
    n, d = query.n, query.d
    deltas = compute_deltas(query)
    lay = layout_for(deltas)
    values = chain.values
    macro = np.searchsorted(query.x, values, side="left")
    PT = chain.P.T.tocsr()

    states = np.array([0], dtype=np.int64)
    table = np.ones((values.size, 1))
    for i in range(1, n + 1):
        if i == 1:
            mixed = chain.first[:, None] * table
        else:
            mixed = PT @ table
        mixed = np.concatenate([mixed, np.zeros((values.size, 1))], axis=1)
        pos = np.full(lay.size, states.size, dtype=np.int64)
        pos[states] = np.arange(states.size)

        keep = lay.level <= i
        if prune:
            keep &= lay.deficit <= n - i
        nxt = np.flatnonzero(keep)
        alpha_src = pos[nxt]
        beta_src = [np.where(lay.has_pred[j][nxt], pos[lay.pred[j][nxt]], states.size) for j in range(d)]
        rs = [lay.run_start[t][nxt] for t in range(d + 1)]

        live = np.flatnonzero(mixed.any(axis=1))
        block = mixed[live]
        bin_no = macro[live][:, None] + 1
        out = np.where((rs[d] <= bin_no), block[:, alpha_src], 0.0)
        for j in range(d):
            feeds = (rs[j] <= bin_no) & (bin_no <= j + 1)
            out = out + np.where(feeds, block[:, beta_src[j]], 0.0)
        new = np.zeros((values.size, nxt.size))
        new[live] = out
        table, states = new, nxt

    hit = np.flatnonzero(states == lay.accept)
    if hit.size == 0:
        return 0.0
    return float(table[:, hit[0]].sum())


def enumerate_paths_oracle(chain: MarkovChain, query: OrderQuery, max_paths: int = DEFAULT_PATH_CAP) -> float:
    """Exact probability by listing every trajectory of positive probability."""
    n = query.n
    P = chain.P.tocsr()
    width = max(int(np.count_nonzero(chain.first)), int(np.diff(P.indptr).max()))
    if width**n > max_paths:
        raise ResourceLimitError(f"up to {width}**{n} paths exceed the cap {max_paths}")
    start = np.flatnonzero(chain.first)
    paths = start[:, None]
    probs = chain.first[start]
    for _ in range(1, n):
        last = paths[:, -1]
        counts = np.diff(P.indptr)[last]
        rep = np.repeat(np.arange(last.size), counts)
        offs = np.arange(rep.size) - np.repeat(np.cumsum(counts) - counts, counts)
        k = P.indptr[last][rep] + offs
        paths = np.column_stack([paths[rep], P.indices[k]])
        probs = probs[rep] * P.data[k]
    xs = np.sort(chain.values[paths], axis=1)
    ok = np.all(xs[:, np.asarray(query.c) - 1] <= np.asarray(query.x)[None, :], axis=1)
    return math.fsum(probs[ok])


def chain_sampler(chain: MarkovChain, n: int):
    """Monte Carlo sampler of ``n``-step trajectories (``m x n`` values)."""
    P = chain.P.tocsr()
    V = chain.hi - chain.lo + 1
    w = max(1, int(np.diff(P.indptr).max()))
    cols = np.zeros((V, w), dtype=np.int64)
    cum = np.ones((V, w))
    for s in range(V):
        lo, hi = P.indptr[s], P.indptr[s + 1]
        k = hi - lo
        cols[s, :k] = P.indices[lo:hi]
        cols[s, k:] = P.indices[hi - 1] if k else s
        cum[s, :k] = np.cumsum(P.data[lo:hi])
    cum[:, -1] = np.inf
    first_cum = np.cumsum(chain.first)
    first_cum[-1] = np.inf
    values = chain.values

    def sample(rng: np.random.Generator, m: int) -> np.ndarray:
        out = np.empty((m, n), dtype=np.int64)
        cur = np.searchsorted(first_cum, rng.random(m), side="right")
        out[:, 0] = cur
        for i in range(1, n):
            u = rng.random(m)
            k = (u[:, None] >= cum[cur]).sum(axis=1)
            cur = cols[cur, k]
            out[:, i] = cur
        return values[out].astype(float)

    return sample


def sharpe_kernel(mean_bp: float, sharpe: float = 1.0, unit_bp: float = 100.0,
                  periods: int = 252) -> tuple[float, float, float]:
    """Trinomial loss-walk probabilities for a portfolio with given drift and Sharpe.

    A step of +1 is a loss of ``unit_bp`` basis points.  The walk matches the
    per-period mean ``-mean_bp / unit_bp`` and standard deviation
    ``mean_bp * sqrt(periods) / sharpe / unit_bp``.
    """
    m = mean_bp / unit_bp
    s = mean_bp * math.sqrt(periods) / sharpe / unit_bp
    move = s * s + m * m
    if move > 1.0:
        raise QueryValidationError(f"unit of {unit_bp} bp is too small for a trinomial step")
    q_up = (move - m) / 2.0
    q_dn = (move + m) / 2.0
    return q_dn, 1.0 - move, q_up
