from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from spillcdf.query import validate_and_canonicalize

CRITERIA: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def exact_enumeration(c, p_rows) -> Fraction:
    """Rational brute force over all bin assignments (rows given as Fractions)."""
    n = len(p_rows)
    d = len(c)
    total = Fraction(0)
    for assign in itertools.product(range(d + 1), repeat=n):
        counts = [0] * (d + 1)
        w = Fraction(1)
        for i, a in enumerate(assign):
            counts[a] += 1
            w *= p_rows[i][a]
        cum = 0
        ok = True
        for j in range(d):
            cum += counts[j]
            if cum < c[j]:
                ok = False
                break
        if ok:
            total += w
    return total


def walk_paths_exact(steps: dict[int, Fraction], n: int, c, x, start: int = 0) -> Fraction:
    """Rational probability over all step sequences of a random walk."""
    total = Fraction(0)
    for seq in itertools.product(list(steps), repeat=n):
        w = Fraction(1)
        vals = []
        v = start
        for s in seq:
            w *= steps[s]
            v += s
            vals.append(v)
        vals.sort()
        if all(vals[cj - 1] <= xj for cj, xj in zip(c, x)):
            total += w
    return total


def random_instance(rng: np.random.Generator, n_max: int, d_max: int, concentration: float = 0.7):
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, min(n, d_max) + 1))
    c = np.sort(rng.choice(np.arange(1, n + 1), d, replace=False))
    p = rng.dirichlet(np.full(d + 1, concentration), size=n)
    p /= p.sum(axis=1, keepdims=True)
    return validate_and_canonicalize(c.tolist(), list(range(d)), n), p


@pytest.fixture
def rng():
    return np.random.default_rng(20260418)
