import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spillcdf.distributions import DiscreteAtoms, Gaussian, Uniform
from spillcdf.errors import InvalidDistributionError, QueryRangeError, QueryValidationError
from spillcdf.query import (
    OrderQuery,
    bin_probabilities,
    canonicalize,
    check_probability_matrix,
    compute_deltas,
    validate_and_canonicalize,
)
from spillcdf.baselines import brute_force
from spillcdf.spill import solve_independent


def test_suffix_min_envelope():
    q = validate_and_canonicalize((2, 3), (0.9, 0.5), 5)
    assert q.x == (0.5, 0.5)


def test_monotone_thresholds_unchanged():
    q = validate_and_canonicalize((1, 2), (1 / 3, 2 / 3), 3)
    assert q == OrderQuery(3, (1, 2), (1 / 3, 2 / 3))


def test_duplicate_index_rejected():
    with pytest.raises(QueryValidationError):
        validate_and_canonicalize((2, 2), (0.1, 0.2), 4)


@pytest.mark.parametrize(
    "c, x, n",
    [((0,), (1.0,), 3), ((4,), (1.0,), 3), ((1, 2, 3, 4), (0, 1, 2, 3), 3)],
)
def test_range_errors(c, x, n):
    with pytest.raises(QueryRangeError):
        validate_and_canonicalize(c, x, n)


@pytest.mark.parametrize(
    "c, x, n",
    [((3, 1), (0, 1), 4), ((1,), (0, 1), 4), ((), (), 2), ((1,), (math.nan,), 2), ((1.5,), (0,), 2), ((1,), (0,), 0)],
)
def test_validation_errors(c, x, n):
    with pytest.raises(QueryValidationError):
        validate_and_canonicalize(c, x, n)


@pytest.mark.parametrize("c, deltas", [((1, 2, 3), (1, 1, 1)), ((2, 3), (2, 1)), ((5,), (5,))])
def test_deltas(c, deltas):
    assert compute_deltas(validate_and_canonicalize(c, range(len(c)), 5)) == deltas


def test_uniform_bin_row():
    q = validate_and_canonicalize((1, 2), (1 / 3, 2 / 3), 3)
    p = bin_probabilities(q, Uniform(0, 1))
    np.testing.assert_allclose(p, np.full((3, 3), 1 / 3), atol=1e-15)


def test_duplicate_thresholds_give_empty_bin():
    q = validate_and_canonicalize((1, 2), (0.5, 0.5), 2)
    p = bin_probabilities(q, Gaussian(0, 1))
    assert p[0, 1] == 0.0


def test_point_mass_row():
    q = validate_and_canonicalize((1,), (0.5,), 1)
    p = bin_probabilities(q, DiscreteAtoms((0.4,), (1.0,)))
    assert p.tolist() == [[1.0, 0.0]]


def test_decreasing_cdf_rejected():
    class Bad:
        def cdf(self, t):
            return 1.0 - min(max(t, 0.0), 1.0)

    q = validate_and_canonicalize((1, 2), (0.2, 0.8), 2)
    with pytest.raises(InvalidDistributionError):
        bin_probabilities(q, Bad())


def test_provider_count_mismatch():
    q = validate_and_canonicalize((1,), (0.5,), 3)
    with pytest.raises(QueryValidationError):
        bin_probabilities(q, [Uniform(0, 1)] * 2)


def test_matrix_row_sum_checked():
    with pytest.raises(InvalidDistributionError):
        check_probability_matrix([[0.5, 0.6]])
    fixed = check_probability_matrix([[0.5, 0.5 + 5e-13]])
    assert math.isclose(fixed.sum(), 1.0, abs_tol=1e-15)


thresholds = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=4)


@given(thresholds, st.data())
def test_canonicalize_idempotent(x, data):
    d = len(x)
    n = data.draw(st.integers(d, 8))
    c = sorted(data.draw(st.lists(st.integers(1, n), min_size=d, max_size=d, unique=True)))
    q = validate_and_canonicalize(c, x, n)
    assert canonicalize(canonicalize(q)) == canonicalize(q)
    assert all(a <= b for a, b in zip(q.x, q.x[1:]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_envelope_preserves_value(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    d = int(rng.integers(1, min(n, 3) + 1))
    c = sorted(rng.choice(np.arange(1, n + 1), d, replace=False).tolist())
    x = rng.normal(size=d).tolist()
    dist = Gaussian(0, 1)
    q = validate_and_canonicalize(c, x, n)
    p = bin_probabilities(q, dist)
    # brute force on the raw (unsorted) thresholds via sampling-free enumeration
    samples = rng.normal(size=(20000, n))
    raw = np.all(np.sort(samples, axis=1)[:, np.array(c) - 1] <= np.array(x), axis=1)
    env = np.all(np.sort(samples, axis=1)[:, np.array(c) - 1] <= np.array(q.x), axis=1)
    assert np.array_equal(raw, env)
    assert abs(solve_independent(q, p) - brute_force(q, p)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_bin_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.normal(size=3)).tolist()
    q = validate_and_canonicalize((1, 2, 3), x, 4)
    p = bin_probabilities(q, [Gaussian(float(m), 1.0) for m in rng.normal(size=4)])
    assert np.all(p >= 0)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)
