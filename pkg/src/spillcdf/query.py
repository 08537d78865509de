"""Problem statement: which order statistics, which thresholds, how many variables.

A query asks for ``P(X_(c_1) <= x_1, ..., X_(c_d) <= x_d)``.  Cutting the real
line at the thresholds gives ``d + 1`` bins, and the query becomes a statement
about how many of ``n`` balls land in the leftmost bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import InvalidDistributionError, QueryRangeError, QueryValidationError

ROW_TOL = 1e-12


class SupportsCdf(Protocol):
    def cdf(self, t: float) -> float: ...


@dataclass(frozen=True)
class OrderQuery:
    n: int
    c: tuple[int, ...]
    x: tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.c)

    @property
    def deltas(self) -> tuple[int, ...]:
        return compute_deltas(self)

    def bounds(self) -> tuple[float, ...]:
        """Bin edges ``(-inf, x_1, ..., x_d, +inf)``."""
        return (-math.inf, *self.x, math.inf)


def validate_and_canonicalize(c: Sequence[int], x: Sequence[float], n: int) -> OrderQuery:
    """Check a raw query and return it with a non-decreasing threshold vector.

    Thresholds are replaced by their suffix minimum.  Because
    ``X_(c_j) <= X_(c_k)`` whenever ``j < k``, tightening ``x_j`` to
    ``min(x_j, x_k)`` never changes the event.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise QueryValidationError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    c = list(c)
    x = [float(v) for v in x]
    if len(c) == 0:
        raise QueryValidationError("at least one order statistic is required")
    if len(c) != len(x):
        raise QueryValidationError(f"c has {len(c)} entries but x has {len(x)}")
    for cj in c:
        if isinstance(cj, bool) or int(cj) != cj:
            raise QueryValidationError(f"order-statistic index {cj!r} is not an integer")
    c = [int(cj) for cj in c]
    if len(c) > n:
        raise QueryRangeError(f"d={len(c)} exceeds n={n}")
    for a, b in zip(c, c[1:]):
        if b <= a:
            raise QueryValidationError(f"indices must be strictly increasing, got {c}")
    if c[0] < 1 or c[-1] > n:
        raise QueryRangeError(f"indices must lie in [1, {n}], got {c}")
    if any(math.isnan(v) for v in x):
        raise QueryValidationError("thresholds must not be NaN")

    env = list(x)
    for j in range(len(env) - 2, -1, -1):
        env[j] = min(env[j], env[j + 1])
    return OrderQuery(n=n, c=tuple(c), x=tuple(env))


def canonicalize(query: OrderQuery) -> OrderQuery:
    return validate_and_canonicalize(query.c, query.x, query.n)


def compute_deltas(query: OrderQuery) -> tuple[int, ...]:
    """Gaps between consecutive indices, with ``c_0 = 0``."""
    prev = 0
    out = []
    for cj in query.c:
        out.append(cj - prev)
        prev = cj
    return tuple(out)


def bin_probabilities(query: OrderQuery, dists: Sequence[SupportsCdf] | SupportsCdf) -> np.ndarray:
    """Return the ``n x (d+1)`` matrix of bin masses for independent variables.

    ``dists`` is either one provider shared by all variables or a sequence of
    ``n`` providers.
    """
    if hasattr(dists, "cdf"):
        dists = [dists] * query.n  # type: ignore[list-item]
    dists = list(dists)  # type: ignore[arg-type]
    if len(dists) != query.n:
        raise QueryValidationError(f"expected {query.n} distributions, got {len(dists)}")

    d = query.d
    p = np.empty((query.n, d + 1))
    for i, dist in enumerate(dists):
        f = [0.0] + [float(dist.cdf(t)) for t in query.x] + [1.0]
        row = np.diff(f)
        if np.any(row < -ROW_TOL):
            raise InvalidDistributionError(
                f"distribution {i} has a decreasing CDF across the thresholds: {f}"
            )
        p[i] = np.clip(row, 0.0, None)
    return check_probability_matrix(p)


def check_probability_matrix(p: np.ndarray, width: int | None = None) -> np.ndarray:
    """Validate a bin-probability matrix, renormalizing rows within rounding."""
    p = np.array(p, dtype=float)
    if p.ndim != 2:
        raise QueryValidationError(f"probability matrix must be 2-D, got shape {p.shape}")
    if width is not None and p.shape[1] != width:
        raise QueryValidationError(f"expected {width} bins per row, got {p.shape[1]}")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidDistributionError("bin probabilities must lie in [0, 1]")
    sums = p.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidDistributionError(f"row {i} sums to {sums[i]!r}, not 1")
    off = sums != 1.0
    if np.any(off):
        p[off] /= sums[off, None]
    return p
