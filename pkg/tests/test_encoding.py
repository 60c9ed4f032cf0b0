import math

import numpy as np
import pytest

from shuffle_sum.encoding import (
    FixedPointParams,
    encode,
    encode_many,
    half_grid_input,
    rounding_mse_bound,
    rounding_variance,
)


def test_integral_points_are_deterministic():
    rng = np.random.default_rng(0)
    assert {encode(0.5, 2, rng) for _ in range(200)} == {1}
    for p in (1, 3, 17, 1000):
        assert {encode(1.0, p, rng) for _ in range(50)} == {p}
        assert {encode(0.0, p, rng) for _ in range(50)} == {0}


def test_float_dust_is_snapped():
    rng = np.random.default_rng(1)
    for x, p, expected in ((0.29, 100, 29), (0.07, 100, 7), (0.7, 90, 63)):
        assert x * p != expected
        assert set(encode_many(np.full(1000, x), p, rng).tolist()) == {expected}
        assert {encode(x, p, rng) for _ in range(100)} == {expected}


def test_quarter_at_precision_two():
    rng = np.random.default_rng(2)
    draws = encode_many(np.full(10**5, 0.25), 2, rng)
    assert set(draws.tolist()) == {0, 1}
    # Bernoulli(1/2): sd of the mean is 0.5 / sqrt(T)
    assert abs(draws.mean() - 0.5) < 3 * 0.5 / math.sqrt(draws.size)


@pytest.mark.parametrize("x", [-0.01, 1.0000001, float("nan")])
def test_out_of_range_rejected(x):
    with pytest.raises(ValueError):
        encode(x, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        encode_many([0.2, x], 4, np.random.default_rng(0))


def test_precision_validated():
    with pytest.raises(ValueError):
        FixedPointParams(0)
    with pytest.raises(ValueError):
        encode(0.3, 0, np.random.default_rng(0))


@pytest.mark.parametrize("n, p, expected", [(100, 10, 0.25), (4, 2, 0.25), (1, 1, 0.25)])
def test_rounding_bound_examples(n, p, expected):
    assert rounding_mse_bound(n, p) == expected


@pytest.mark.parametrize("x, p", [(0.3, 7), (0.123, 1), (0.999, 64), (0.5, 3)])
def test_unbiased(x, p):
    rng = np.random.default_rng(int(x * 1000) + p)
    T = 10**5
    draws = encode_many(np.full(T, x), p, rng) / p
    assert abs(draws.mean() - x) < 4 * (1 / (2 * p)) / math.sqrt(T)


def test_support_is_floor_or_floor_plus_one():
    rng = np.random.default_rng(4)
    xs = rng.random(10**4)
    for p in (1, 5, 33):
        enc = encode_many(xs, p, rng)
        base = np.floor(xs * p)
        assert np.all((enc == base) | (enc == base + 1))


def test_scalar_and_vector_agree_in_distribution():
    T = 20_000
    a = np.array([encode(0.37, 9, np.random.default_rng(i)) for i in range(T)])
    b = encode_many(np.full(T, 0.37), 9, np.random.default_rng(99))
    assert abs(a.mean() - b.mean()) < 4 * math.sqrt(0.25 * 2 / T)


def test_rounding_bound_monte_carlo():
    rng = np.random.default_rng(5)
    for n, p in ((3, 2), (50, 7), (200, 14)):
        xs = rng.random(n)
        trials = 10**4
        block = np.broadcast_to(xs, (trials, n))
        err = encode_many(block, p, rng).sum(axis=1) / p - xs.sum()
        sq = err**2
        se = sq.std(ddof=1) / math.sqrt(trials)
        assert sq.mean() <= rounding_mse_bound(n, p) + 3 * se
        assert abs(sq.mean() - rounding_variance(xs, p)) < 5 * se


def test_half_grid_input_attains_bound():
    for p in (1, 2, 10, 32, 100):
        x = half_grid_input(p)
        assert 0 <= x <= 1
        assert rounding_variance([x] * 8, p) == pytest.approx(rounding_mse_bound(8, p))
