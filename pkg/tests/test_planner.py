import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from shuffle_sum.planner import (
    EXACT_INVERSION,
    IMPROVED,
    PAPER_LITERAL,
    PLAN_FIELDS,
    PlanMode,
    PlanReport,
    bit_length,
    ceil_sqrt,
    improved_root,
    message_count_basic,
    message_count_improved,
    message_count_grouped,
    plan,
    predicted_mse,
    sd_bound,
    sigma_from_delta,
)
from shuffle_sum.protocol import ProtocolParams

D30 = 2.0**-30


def quiet_plan(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return plan(*args, **kw)


def test_reference_plan_basic_count():
    rep = plan(1000, 1.0, D30)
    pr = rep.params
    assert (pr.p, pr.q, pr.k, pr.sigma) == (32, 64000, 162, 30)
    assert bit_length(pr.q) == 16
    assert pr.alpha == pytest.approx(0.969233, abs=1e-6)
    assert rep.bits_per_party == 2592
    assert rep.k_basic == 162 and rep.k_grouped == 162


def test_reference_plan_improved():
    rep = quiet_plan(1000, 1.0, D30, PlanMode(IMPROVED))
    assert rep.params.k == 83 and rep.k_improved == 83


def test_two_party_plan():
    rep = plan(2, 1.0, 0.1)
    assert (rep.params.p, rep.params.q, rep.params.k) == (2, 8, 25)


@pytest.mark.parametrize("n", [1, 0, -3])
def test_plan_rejects_small_n(n):
    with pytest.raises(ValueError, match="n must be"):
        plan(n, 1.0, D30)


@pytest.mark.parametrize("delta", [0.0, 1.0, 1.5, -0.1])
def test_plan_rejects_bad_delta(delta):
    with pytest.raises(ValueError):
        plan(10, 1.0, delta)


def test_plan_mode_validation():
    with pytest.raises(ValueError):
        PlanMode("fastest")
    with pytest.raises(ValueError):
        PlanMode(PAPER_LITERAL, "loose")


def test_sigma_examples():
    assert sigma_from_delta(1.0, D30, EXACT_INVERSION) == 31
    assert sigma_from_delta(1.0, D30, PAPER_LITERAL) == 30
    for d in (D30, 1e-6, 0.01):
        assert sigma_from_delta(1e-12, d, EXACT_INVERSION) == math.ceil(-math.log2(d) - 1e-9)
    assert sigma_from_delta(1.0, 0.9) == 2
    assert sigma_from_delta(0.01, 0.99) == 1
    assert sigma_from_delta(1.0, 0.9, PAPER_LITERAL) == 1
    assert sigma_from_delta(800.0, D30) >= 800 / math.log(2)


def test_sigma_is_smallest_meeting_delta():
    for eps in (0.1, 1.0, 3.0):
        for d in (1e-3, 1e-9, D30):
            s = sigma_from_delta(eps, d)
            assert (1 + math.exp(eps)) * 2.0 ** (-s - 1) <= d * (1 + 1e-12)
            if s > 1:
                assert (1 + math.exp(eps)) * 2.0 ** (-s) > d


def test_message_count_basic_examples():
    assert message_count_basic(64000, 30, 1000) == 162
    assert message_count_basic(2, 1, 2) == 9
    assert message_count_basic(64000, 31, 2) - message_count_basic(64000, 30, 2) == 2
    with pytest.raises(ValueError):
        message_count_basic(1, 1, 2)


def test_message_count_grouped_grouping_within_one():
    for n in (2, 3, 100, 1000, 12345):
        q = 2 * n * ceil_sqrt(n)
        for b in (10, 30, 41):
            diff = message_count_grouped(q, 2.0**-b, n) - message_count_basic(q, b, n)
            assert 0 <= diff <= 1


def test_improved_root_matches_brentq():
    for q, sigma in ((64000, 30), (8, 1), (2**20, 128), (3, 5)):
        c = 1 + sigma + 2.5 * bit_length(q)
        oracle = brentq(lambda k: k - c - 0.25 * math.log2(math.pi * (k + 0.5)), c, c + 100, xtol=1e-12)
        assert improved_root(q, sigma) == pytest.approx(oracle, abs=1e-8)
    assert improved_root(64000, 30) == pytest.approx(72.96, abs=0.01)
    assert message_count_improved(64000, 30, 1000) == 83


def test_improved_never_exceeds_basic_on_grid():
    qs = [2**e for e in range(3, 21)]
    ns = [2, 3, 10, 100, 999, 10**4, 10**5, 10**6]
    for q in qs:
        for sigma in range(1, 61):
            for n in ns:
                assert message_count_improved(q, sigma, n) <= message_count_basic(q, sigma, n)


def test_improved_approaches_half_of_basic():
    ratio = message_count_basic(2**20, 128, 2) / message_count_improved(2**20, 128, 2)
    assert 1.9 < ratio < 2.0


@settings(max_examples=200, deadline=None)
@given(q=st.integers(2, 2**40), sigma=st.integers(1, 200), n=st.integers(2, 10**7))
def test_improved_satisfies_fixed_point_inequality(q, sigma, n):
    k = message_count_improved(q, sigma, n)
    shifted = k - math.log2(n - 1)
    rhs = 1 + sigma + 2.5 * bit_length(q) + 0.25 * math.log2(math.pi * (shifted + 0.5))
    assert shifted >= rhs - 1
    assert k <= message_count_basic(q, sigma, n)


def test_predicted_mse_examples():
    p10 = ProtocolParams(n=100, k=2, p=10, q=2000, alpha=math.exp(-0.1))
    assert predicted_mse(p10) == pytest.approx(2.2483, abs=1e-4)
    assert predicted_mse(p10.with_(alpha=0.0)) == 0.25
    assert plan(100, 1.0, D30).predicted_mse == pytest.approx(2.2483341663360923, rel=1e-12)
    for n in (16, 100, 10**4):
        rep = quiet_plan(n, 20.0 * ceil_sqrt(n), D30)
        assert rep.predicted_mse == pytest.approx(0.25, abs=1e-6)


def test_sd_bound_examples():
    simplified, exact = sd_bound(162, 64000, 1000)
    assert simplified == pytest.approx(999 * 2.0**-40, rel=1e-12)
    assert simplified <= D30 and exact <= simplified
    assert sd_bound(2, 2, 2) == (1.0, 1.0)
    assert sd_bound(5, 2, 1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        sd_bound(0, 8, 2)


@settings(max_examples=300, deadline=None)
@given(k=st.integers(1, 2000), q=st.integers(2, 2**62), n=st.integers(2, 10**9))
def test_sd_bound_in_unit_interval(k, q, n):
    for b in sd_bound(k, q, n):
        assert 0.0 < b <= 1.0


def test_epsilon_identity():
    # alpha carries one ulp of error, so the relative error is about 1e-16 * p / eps
    for eps in (0.1, 0.5, 1.0, 4.0):
        for n in (2, 100, 1000, 10**6):
            rep = plan(n, eps, D30)
            recovered = rep.params.p * math.log(1 / rep.params.alpha)
            assert abs(recovered - eps) <= 1e-12 * eps


def test_bits_grow_like_log_squared():
    ratios = []
    for e in range(10, 23, 2):
        a = plan(2**e, 1.0, D30).bits_per_party
        b = plan(2**(e + 2), 1.0, D30).bits_per_party
        ratios.append(b / a)
        # log^2 growth: doubling log n at most quadruples bits
        assert b / a < 4
    assert ratios[-1] < ratios[0]
    assert ratios[-1] < 1.25
    # normalised by log^2 n the cost settles
    norm = [plan(2**e, 1.0, D30).bits_per_party / e**2 for e in (16, 20, 24)]
    assert max(norm) / min(norm) < 1.6


GRID = [(n, eps, d) for n in (2, 3, 10, 100, 1000, 4096, 10**5)
        for eps in (0.1, 1.0, 5.0) for d in (1e-3, 1e-6, D30, 1e-12)]


@pytest.mark.parametrize("variant, rule", [
    (PAPER_LITERAL, PAPER_LITERAL), (PAPER_LITERAL, EXACT_INVERSION), (IMPROVED, EXACT_INVERSION),
])
def test_plans_meet_their_own_targets(variant, rule):
    for n, eps, d in GRID:
        rep = plan(n, eps, d, PlanMode(variant, rule))
        assert rep.sd_bound <= 2.0 ** -rep.params.sigma
        assert rep.delta_achieved <= d
        assert rep.bits_per_party == rep.params.k * bit_length(rep.params.q)


def test_improved_with_literal_sigma_warns_when_short():
    with pytest.warns(UserWarning, match="delta"):
        rep = plan(1000, 1.0, D30, PlanMode(IMPROVED, PAPER_LITERAL))
    assert rep.delta_achieved > D30
    assert rep.sd_bound <= 2.0**-30


def test_report_round_trip():
    rep = plan(1000, 1.0, D30, PlanMode(PAPER_LITERAL, EXACT_INVERSION))
    doc = rep.to_dict()
    assert tuple(sorted(doc)) == tuple(sorted(PLAN_FIELDS))
    assert PlanReport.from_dict(doc) == rep
    with pytest.raises(ValueError):
        PlanReport.from_dict({**doc, "extra": 1})
