"""Spilling dynamic program for independent variables.

Instead of tracking how many balls sit in each bin (``n^d`` states), each bin
``j`` holds at most ``delta_j = c_j - c_{j-1}`` balls and any overflow cascades
into the next bin to the right.  Overflow from bin ``d`` falls into the
untracked tail bin.  The compressed state ``kappa`` lives in
``prod_j (1 + delta_j)`` cells and all bin conditions hold exactly when
``kappa == delta``.

Tables are flat float64 vectors in mixed-radix order with ``kappa_1`` as the
fastest-varying digit.
"""

from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import QueryValidationError
from .query import OrderQuery, check_probability_matrix, compute_deltas

CHUNK = 1 << 15


def spill_transform(k: Sequence[int], deltas: Sequence[int]) -> tuple[int, ...]:
    """Compress raw bin counts ``k`` into a spill state.

    ``S_j(k) = min(delta_j, max(0, max_{j' <= j} (sum_{i=j'}^{j} k_i
    - sum_{i=j'}^{j-1} delta_i)))``
    """
    if len(k) != len(deltas):
        raise QueryValidationError(f"count vector has {len(k)} entries, expected {len(deltas)}")
    if any(kj < 0 for kj in k):
        raise QueryValidationError(f"ball counts must be non-negative, got {tuple(k)}")
    out = []
    for j in range(len(k)):
        best = 0
        for jp in range(j + 1):
            val = sum(k[jp : j + 1]) - sum(deltas[jp:j])
            if val > best:
                best = val
        out.append(min(deltas[j], best))
    return tuple(out)


def sigma(j: int, kappa: Sequence[int], deltas: Sequence[int]) -> tuple[int, ...]:
    """Bins (1-based, ascending) from which a new ball ends up in bin ``j``.

    ``j`` ranges over ``1..d+1``; ``d+1`` is the tail bin.  A ball thrown into
    bin ``j' < j`` reaches ``j`` only if every bin ``j'..j-1`` is already full.
    """
    d = len(deltas)
    if not 1 <= j <= d + 1:
        raise QueryValidationError(f"target bin {j} outside 1..{d + 1}")
    r = j
    while r > 1 and kappa[r - 2] == deltas[r - 2]:
        r -= 1
    return tuple(range(r, j + 1))


def run_sums(p_row: Sequence[float]) -> np.ndarray:
    """``R[r-1, t-1] = p_t + p_{t-1} + ... + p_r`` for ``r <= t``.

    Accumulated from ``t`` downwards; the direct route in :meth:`SpillLayout.coefficients`
    adds terms in the same order, so both give identical bits.
    """
    m = len(p_row)
    out = np.zeros((m, m))
    for t in range(m):
        acc = float(p_row[t])
        out[t, t] = acc
        for s in range(t - 1, -1, -1):
            acc = acc + float(p_row[s])
            out[s, t] = acc
    return out


class SpillLayout:
    """Index arithmetic shared by every table over one ``deltas`` vector."""

    def __init__(self, deltas: Sequence[int]):
        deltas = tuple(int(v) for v in deltas)
        if not deltas or any(v < 1 for v in deltas):
            raise QueryValidationError(f"deltas must be positive, got {deltas}")
        self.deltas = deltas
        self.d = d = len(deltas)
        radix = np.array(deltas) + 1
        self.radix = radix
        self.strides = np.concatenate(([1], np.cumprod(radix[:-1]))).astype(np.int64)
        self.size = int(np.prod(radix))
        flat = np.arange(self.size, dtype=np.int64)
        kappa = (flat[:, None] // self.strides[None, :]) % radix[None, :]
        self.kappa = kappa
        full = kappa == np.array(deltas)[None, :]

        # run_start[t-1][s] = min sigma(t, kappa_s)
        rs = np.empty((d + 1, self.size), dtype=np.int64)
        rs[0] = 1
        for t in range(2, d + 2):
            rs[t - 1] = np.where(full[:, t - 2], rs[t - 2], t)
        self.run_start = rs

        self.has_pred = (kappa > 0).T.copy()
        self.pred = np.clip(flat[None, :] - self.strides[:, None], 0, None)
        self.level = kappa.sum(axis=1)
        self.deficit = sum(deltas) - self.level
        self.accept = self.size - 1
        for arr in (kappa, rs, self.has_pred, self.pred, self.level, self.deficit):
            arr.setflags(write=False)

    def index(self, kappa: Sequence[int]) -> int:
        return int(np.dot(kappa, self.strides))

    def coefficients(self, p_row: Sequence[float], idx: np.ndarray, precompute: bool) -> list[np.ndarray]:
        """Per-state mass that ends up in each target bin ``t = 1..d+1``."""
        d = self.d
        if precompute:
            R = run_sums(p_row)
            return [R[self.run_start[t][idx] - 1, t] for t in range(d + 1)]
        out = []
        for t in range(d + 1):
            r = self.run_start[t][idx]
            acc = np.full(idx.shape, float(p_row[t]))
            for s in range(t - 1, -1, -1):
                acc = np.where(r <= s + 1, acc + float(p_row[s]), acc)
            out.append(acc)
        return out

    def apply(self, prev: np.ndarray, idx: np.ndarray, coefs: Sequence[np.ndarray]) -> np.ndarray:
        """New values at ``idx``: tail term first, then bins ``1..d`` ascending.

        ``prev`` may carry leading axes; the state axis is last.
        """
        out = prev[..., idx] * coefs[self.d]
        for j in range(self.d):
            term = prev[..., self.pred[j][idx]] * coefs[j]
            out = out + np.where(self.has_pred[j][idx], term, 0.0)
        return out

    def active(self, remaining: int | None) -> np.ndarray:
        if remaining is None:
            return np.arange(self.size, dtype=np.int64)
        return np.flatnonzero(self.deficit <= remaining)


@functools.lru_cache(maxsize=64)
def layout_for(deltas: tuple[int, ...]) -> SpillLayout:
    return SpillLayout(deltas)


@dataclass
class SpillTable:
    deltas: tuple[int, ...]
    values: np.ndarray

    @classmethod
    def initial(cls, deltas: Sequence[int]) -> "SpillTable":
        lay = layout_for(tuple(deltas))
        v = np.zeros(lay.size)
        v[0] = 1.0
        return cls(lay.deltas, v)

    def __getitem__(self, kappa: Sequence[int]) -> float:
        lay = layout_for(self.deltas)
        if len(kappa) != lay.d or any(not 0 <= kj <= dj for kj, dj in zip(kappa, self.deltas)):
            raise KeyError(tuple(kappa))
        return float(self.values[lay.index(kappa)])

    def total(self) -> float:
        return float(self.values.sum())

    def accepting(self) -> float:
        return float(self.values[-1])

    def as_array(self) -> np.ndarray:
        """Dense view indexed ``[kappa_1, ..., kappa_d]``."""
        shape = tuple(v + 1 for v in self.deltas)
        return self.values.reshape(shape, order="F")


def _chunks(idx: np.ndarray) -> list[np.ndarray]:
    return [idx[s : s + CHUNK] for s in range(0, idx.size, CHUNK)] or [idx]


def spill_step(
    prev: SpillTable,
    p_row: Sequence[float],
    deltas: Sequence[int] | None = None,
    prune_bound: int | None = None,
    precompute_sums: bool = False,
    workers: int = 1,
) -> SpillTable:
    """Throw one more ball with bin masses ``p_row`` into the table ``prev``.

    With ``prune_bound`` set to the number of balls still to come, states that
    can no longer reach the accepting state are left at zero.
    """
    deltas = tuple(prev.deltas if deltas is None else deltas)
    if tuple(prev.deltas) != deltas:
        raise QueryValidationError(f"table has deltas {prev.deltas}, step was given {deltas}")
    lay = layout_for(deltas)
    if prev.values.shape != (lay.size,):
        raise QueryValidationError(f"table has {prev.values.size} cells, expected {lay.size}")
    if len(p_row) != lay.d + 1:
        raise QueryValidationError(f"probability row has {len(p_row)} bins, expected {lay.d + 1}")
    out = np.zeros(lay.size)
    idx = lay.active(prune_bound)

    def run(part: np.ndarray) -> None:
        coefs = lay.coefficients(p_row, part, precompute_sums)
        out[part] = lay.apply(prev.values, part, coefs)

    parts = _chunks(idx)
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, parts))
    else:
        for part in parts:
            run(part)
    return SpillTable(deltas, out)


def iter_spill_tables(
    query: OrderQuery,
    p: np.ndarray,
    prune: bool = True,
    precompute_sums: bool = False,
    workers: int = 1,
) -> Iterator[SpillTable]:
    """Yield ``T_1, ..., T_n``; only the current and previous table are alive."""
    p = check_probability_matrix(p, width=query.d + 1)
    if p.shape[0] != query.n:
        raise QueryValidationError(f"matrix has {p.shape[0]} rows, query has n={query.n}")
    deltas = compute_deltas(query)
    table = SpillTable.initial(deltas)
    for i in range(1, query.n + 1):
        bound = query.n - i if prune else None
        table = spill_step(table, p[i - 1], deltas, bound, precompute_sums, workers)
        yield table


def solve_independent(
    query: OrderQuery,
    p: np.ndarray,
    prune: bool = True,
    precompute_sums: bool = False,
    workers: int = 1,
) -> float:
    """``P(X_(c_1) <= x_1, ..., X_(c_d) <= x_d)`` for independent variables.

    ``p`` is the ``n x (d+1)`` bin-probability matrix of the query.
    """
    table = None
    for table in iter_spill_tables(query, p, prune, precompute_sums, workers):
        pass
    assert table is not None
    return table.accepting()
