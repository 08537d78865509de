"""Univariate CDFs for independent variables and conditional micro-bin rows
for dependent ones."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidDistributionError, QueryValidationError

ROW_TOL = 1e-12


def _check_t(t: float) -> float:
    t = float(t)
    if math.isnan(t):
        raise QueryValidationError("CDF argument must not be NaN")
    return t


@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidDistributionError(f"Uniform needs a < b, got ({self.a}, {self.b})")

    def cdf(self, t: float) -> float:
        t = _check_t(t)
        if t <= self.a:
            return 0.0
        if t >= self.b:
            return 1.0
        return (t - self.a) / (self.b - self.a)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.uniform(self.a, self.b, size)


@dataclass(frozen=True)
class Gaussian:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidDistributionError(f"Gaussian needs sigma > 0, got {self.sigma}")

    def cdf(self, t: float) -> float:
        t = _check_t(t)
        return 0.5 * math.erfc(-(t - self.mu) / (self.sigma * math.sqrt(2.0)))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, size)


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidDistributionError(f"Exponential needs rate > 0, got {self.rate}")

    def cdf(self, t: float) -> float:
        t = _check_t(t)
        if t <= 0.0:
            return 0.0
        return -math.expm1(-self.rate * t)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, size)


@dataclass(frozen=True)
class DiscreteAtoms:
    """Finite-support distribution; ``points`` need not be sorted on input."""

    points: tuple[float, ...]
    masses: tuple[float, ...]
    _cum: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.points) != len(self.masses) or not self.points:
            raise InvalidDistributionError("points and masses must be non-empty and equal length")
        if any(m < 0 for m in self.masses):
            raise InvalidDistributionError("atom masses must be non-negative")
        if abs(math.fsum(self.masses) - 1.0) > ROW_TOL:
            raise InvalidDistributionError(f"atom masses sum to {math.fsum(self.masses)!r}")
        order = sorted(range(len(self.points)), key=lambda k: self.points[k])
        pts = tuple(float(self.points[k]) for k in order)
        ms = tuple(float(self.masses[k]) for k in order)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        cum = []
        for k in range(len(ms)):
            cum.append(math.fsum(ms[: k + 1]))
        object.__setattr__(self, "_cum", tuple(cum))

    def cdf(self, t: float) -> float:
        t = _check_t(t)
        k = int(np.searchsorted(self.points, t, side="right"))
        if k == 0:
            return 0.0
        if k == len(self.points):
            return 1.0
        return min(self._cum[k - 1], 1.0)

    def mass_between(self, lo: float, hi: float) -> float:
        """Mass on ``(lo, hi]``, summed atom by atom."""
        return math.fsum(m for v, m in zip(self.points, self.masses) if lo < v <= hi)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(np.asarray(self.points), size=size, p=np.asarray(self.masses))


class Empirical:
    """Right-continuous empirical CDF: ``F(t) = #{samples <= t} / N``."""

    def __init__(self, samples: Sequence[float]):
        arr = np.sort(np.asarray(samples, dtype=float))
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            raise InvalidDistributionError("Empirical needs a non-empty finite sample")
        self.samples = arr

    def cdf(self, t: float) -> float:
        t = _check_t(t)
        return int(np.searchsorted(self.samples, t, side="right")) / self.samples.size

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(self.samples, size=size)

    def __repr__(self):
        return f"Empirical(N={self.samples.size})"


def cdf_eval(provider: Any, t: float) -> float:
    return provider.cdf(t)


_FACTORIES: dict[str, Callable[..., Any]] = {
    "uniform": lambda a=0.0, b=1.0: Uniform(float(a), float(b)),
    "gaussian": lambda mu=0.0, sigma=1.0: Gaussian(float(mu), float(sigma)),
    "normal": lambda mu=0.0, sigma=1.0: Gaussian(float(mu), float(sigma)),
    "exponential": lambda rate=1.0: Exponential(float(rate)),
    "atoms": lambda points, masses: DiscreteAtoms(tuple(points), tuple(masses)),
    "empirical": lambda samples: Empirical(samples),
}


def from_config(cfg: Mapping[str, Any]):
    """Build a provider from ``{"name": ..., **params}``."""
    cfg = dict(cfg)
    try:
        name = str(cfg.pop("name")).lower()
    except KeyError:
        raise QueryValidationError("distribution spec needs a 'name'") from None
    if name not in _FACTORIES:
        raise QueryValidationError(f"unknown distribution {name!r}; choose from {sorted(_FACTORIES)}")
    try:
        return _FACTORIES[name](**cfg)
    except TypeError as exc:
        raise QueryValidationError(f"bad parameters for {name}: {exc}") from None


# --- dependent case -------------------------------------------------------

ConditionalFn = Callable[[int, tuple], Sequence[float]]


class ConditionalProvider:
    """Wraps ``fn(i, neighbor_locations) -> row`` and validates every row.

    ``i`` is the 1-based variable index and ``neighbor_locations`` is a tuple
    of ``(bin, micro)`` pairs, 1-based, one per lower-indexed neighbor in
    increasing variable order.  The row has length ``(d+1) * H`` and is laid
    out bin-major: micro-bin ``(j, h)`` sits at ``(j-1) * H + (h-1)``.
    """

    def __init__(self, fn: ConditionalFn, n_micro: int):
        self.fn = fn
        self.n_micro = n_micro

    def __call__(self, i: int, neighbor_locations: tuple) -> np.ndarray:
        return conditional_micro_probs(self, i, neighbor_locations)


def conditional_micro_probs(provider: ConditionalProvider, i: int, neighbor_locations: tuple) -> np.ndarray:
    row = np.asarray(provider.fn(i, tuple(neighbor_locations)), dtype=float)
    if row.shape != (provider.n_micro,):
        raise InvalidDistributionError(
            f"conditional for variable {i} has shape {row.shape}, expected ({provider.n_micro},)"
        )
    if np.any(row < 0.0) or not np.all(np.isfinite(row)):
        raise InvalidDistributionError(f"conditional for variable {i} has negative or non-finite mass")
    total = math.fsum(row)
    if abs(total - 1.0) > ROW_TOL:
        raise InvalidDistributionError(f"conditional for variable {i} sums to {total!r}")
    return row


def independent_conditional(rows: np.ndarray) -> ConditionalProvider:
    """Conditional provider that ignores neighbors and returns ``rows[i-1]``."""
    rows = np.asarray(rows, dtype=float)
    return ConditionalProvider(lambda i, _nbrs: rows[i - 1], rows.shape[1])
