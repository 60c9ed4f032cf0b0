import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from shuffle_sum.group_math import (
    MAX_MODULUS,
    GroupElement,
    GroupModulus,
    ShareVector,
    Transcript,
    canonicalize,
    elements,
    read_transcript,
    split_shares,
    split_shares_batch,
    sum_mod,
    write_transcript,
)


class ScriptedStream:
    """Replays fixed draws so share arithmetic can be checked by hand."""

    def __init__(self, draws):
        self.draws = list(draws)

    def integers(self, low, high, size=None):
        out = [self.draws.pop(0) for _ in range(size)]
        assert all(low <= v < high for v in out)
        return np.array(out, dtype=np.int64)


def test_modulus_bounds():
    with pytest.raises(ValueError):
        GroupModulus(1)
    with pytest.raises(ValueError):
        GroupModulus(MAX_MODULUS + 1)
    assert GroupModulus(MAX_MODULUS).q == MAX_MODULUS


def test_element_reduces_on_construction():
    q = GroupModulus(7)
    assert GroupElement(12, q).value == 5
    assert GroupElement(-1, q).value == 6
    assert (GroupElement(5, q) + GroupElement(4, q)).value == 2
    assert (GroupElement(1, q) - GroupElement(4, q)).value == 4
    assert (-GroupElement(3, q)).value == 4


def test_element_rejects_other_group():
    with pytest.raises(ValueError):
        GroupElement(1, 7) + GroupElement(1, 8)


def test_split_shares_hand_example():
    shares = split_shares(GroupElement(5, 7), 3, ScriptedStream([2, 4]))
    assert shares.shares.tolist() == [2, 4, 6]


def test_split_single_share_is_value():
    shares = split_shares(GroupElement(3, 10), 1, np.random.default_rng(0))
    assert shares.shares.tolist() == [3]


def test_split_rejects_zero_shares():
    with pytest.raises(ValueError):
        split_shares(GroupElement(3, 10), 0, np.random.default_rng(0))


def test_split_recombines_10k_random_cases():
    rng = np.random.default_rng(1234)
    for _ in range(10_000):
        q = int(rng.integers(2, 10**6))
        k = int(rng.integers(1, 40))
        v = int(rng.integers(0, q))
        sv = split_shares(GroupElement(v, q), k, rng)
        assert len(sv) == k
        assert sum_mod(sv, q).value == v


@settings(max_examples=200, deadline=None)
@given(q=st.integers(2, MAX_MODULUS), k=st.integers(1, 30), v=st.integers(0, 2**70), seed=st.integers(0, 2**32))
def test_split_recombines_property(q, k, v, seed):
    sv = split_shares(v, k, np.random.default_rng(seed), q=q)
    assert sum_mod(sv, q).value == v % q
    assert sv.shares.min() >= 0 and sv.shares.max() < q


def test_first_share_uniform_chi_square():
    q, draws = 11, 10**5
    rng = np.random.default_rng(77)
    rows = split_shares_batch(np.full(draws, 4), 2, q, rng)
    counts = np.bincount(rows[:, 0], minlength=q)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_batch_rows_sum_to_values():
    rng = np.random.default_rng(5)
    values = rng.integers(0, 1000, size=500)
    rows = split_shares_batch(values, 9, 1000, rng)
    assert np.array_equal(rows.sum(axis=1) % 1000, values)


def test_batch_large_modulus_no_overflow():
    q = 2**62
    rng = np.random.default_rng(6)
    values = np.array([1, q - 1, 12345])
    rows = split_shares_batch(values, 8, q, rng)
    for row, v in zip(rows, values):
        assert sum_mod(row, q).value == v


@pytest.mark.parametrize("values, q, expected", [
    ([3, 14, 1, 0], 16, 2),
    ([], 5, 0),
    ([15, 1], 16, 0),
    ([MAX_MODULUS - 1, 1], MAX_MODULUS, 0),
])
def test_sum_mod_examples(values, q, expected):
    assert sum_mod(values, q).value == expected


def test_sum_mod_large_values_exact():
    q = MAX_MODULUS - 57
    values = [q - 1] * 1000
    assert sum_mod(values, q).value == (1000 * (q - 1)) % q


def test_sum_mod_rejects_mixed_moduli():
    with pytest.raises(ValueError):
        sum_mod([GroupElement(1, 5), GroupElement(1, 7)], 5)


def test_canonicalize_examples():
    assert canonicalize([3, 1, 2]) == (1, 2, 3)
    assert canonicalize([]) == ()
    assert canonicalize(elements([4, 0, 4], 5)) == (0, 4, 4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1000), max_size=50))
def test_canonicalize_idempotent(msgs):
    once = canonicalize(msgs)
    assert canonicalize(once) == once
    assert canonicalize(once.as_tuple()) == once


def test_canonicalize_permutation_invariant():
    rng = np.random.default_rng(3)
    msgs = rng.integers(0, 50, size=60)
    ref = canonicalize(msgs)
    for _ in range(1000):
        assert canonicalize(rng.permutation(msgs)) == ref


def test_transcripts_hash_by_multiset():
    assert hash(Transcript([2, 1, 2])) == hash(Transcript([2, 2, 1]))
    assert len({Transcript([2, 1]), Transcript([1, 2])}) == 1


def test_share_vector_is_immutable():
    sv = ShareVector([1, 2, 3], 7)
    with pytest.raises(ValueError):
        sv.shares[0] = 5


def test_transcript_file_round_trip(tmp_path):
    t = Transcript([9, 0, 3, 3], 10)
    path = tmp_path / "t.txt"
    write_transcript(path, t, 2, 2, 10)
    assert path.read_text().splitlines() == ["2 2 10", "0", "3", "3", "9"]
    back, n, k, q = read_transcript(path)
    assert (back, n, k, q) == (t, 2, 2, 10)


def test_transcript_file_rejects_bad_content(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 5\n3\n1\n")
    with pytest.raises(ValueError, match="canonical"):
        read_transcript(path)
    path.write_text("1 2 5\n3\n")
    with pytest.raises(ValueError, match="header"):
        read_transcript(path)
    with pytest.raises(ValueError):
        write_transcript(path, Transcript([1]), 1, 2, 5)
