import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradfit.errors import ParameterError
from gradfit.indexset import MultiIndexSet, count_total_degree, hyperbolic_set


def brute_force(l, q, p):
    top = int(math.floor(q))
    return {
        beta
        for beta in itertools.product(range(top + 1), repeat=l)
        if sum(b**p for b in beta) <= q**p + 1e-12
    }


def test_total_degree_example():
    s = hyperbolic_set(2, 2, 1.0)
    assert s.indices == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert len(s) == 6


def test_hyperbolic_drops_mixed_term():
    s = hyperbolic_set(2, 2, 0.5)
    assert set(s.indices) == {(0, 0), (1, 0), (0, 1), (2, 0), (0, 2)}
    assert len(s) == 5


def test_forty_dimensions_structure():
    s = hyperbolic_set(40, 2, 0.5)
    assert len(s) == 81
    degrees = sorted(sum(beta) for beta in s)
    assert degrees.count(0) == 1 and degrees.count(1) == 40 and degrees.count(2) == 40
    assert all(sum(1 for b in beta if b) <= 1 for beta in s)


@pytest.mark.parametrize("l,q,expected", [(2, 2, 6), (3, 2, 10), (2, 4, 15)])
def test_count_total_degree(l, q, expected):
    assert count_total_degree(l, q) == expected
    assert len(hyperbolic_set(l, q, 1.0)) == expected


@pytest.mark.parametrize("l", range(1, 7))
@pytest.mark.parametrize("q", range(0, 7))
def test_count_matches_brute_force(l, q):
    if l >= 5 and q >= 5:
        expected = math.comb(l + q, q)  # keep brute force small; formula cross-checked below
    else:
        expected = len(brute_force(l, q, 1.0))
    assert count_total_degree(l, q) == expected == len(hyperbolic_set(l, q, 1.0))


@settings(max_examples=60, deadline=None)
@given(
    l=st.integers(1, 4),
    q=st.integers(0, 5),
    p=st.sampled_from([0.3, 0.5, 0.7, 1.0]),
)
def test_matches_brute_force_enumeration(l, q, p):
    assert set(hyperbolic_set(l, q, p).indices) == brute_force(l, q, p)


@settings(max_examples=40, deadline=None)
@given(l=st.integers(1, 4), q1=st.integers(0, 5), dq=st.integers(0, 3), p=st.sampled_from([0.4, 0.6, 1.0]))
def test_monotone_in_q(l, q1, dq, p):
    small = set(hyperbolic_set(l, q1, p).indices)
    big = set(hyperbolic_set(l, q1 + dq, p).indices)
    assert small <= big


@settings(max_examples=40, deadline=None)
@given(l=st.integers(1, 4), q=st.integers(0, 6), p=st.sampled_from([0.4, 0.6, 1.0]))
def test_downward_closed_and_ordered(l, q, p):
    s = hyperbolic_set(l, q, p)
    members = set(s.indices)
    assert s.indices[0] == (0,) * l
    for beta in members:
        for k in range(l):
            if beta[k] > 0:
                lower = beta[:k] + (beta[k] - 1,) + beta[k + 1 :]
                assert lower in members
    degrees = [sum(b) for b in s.indices]
    assert degrees == sorted(degrees)
    assert len(members) == len(s.indices)


@pytest.mark.parametrize("args", [(0, 2, 1.0), (2, 2, 0.0), (2, 2, 1.5), (2, -1, 1.0)])
def test_invalid_parameters(args):
    with pytest.raises(ParameterError):
        hyperbolic_set(*args)


def test_text_round_trip(tmp_path):
    s = hyperbolic_set(3, 3, 0.7)
    path = tmp_path / "set.txt"
    s.save(path)
    back = MultiIndexSet.load(path)
    assert back == s
    assert path.read_text().splitlines()[0].split()[0] == "3"


def test_prefix_and_duplicates():
    s = hyperbolic_set(2, 3)
    assert s.prefix(4).indices == s.indices[:4]
    with pytest.raises(ParameterError):
        MultiIndexSet(2, ((0, 0), (0, 0)))
    with pytest.raises(ParameterError):
        s.prefix(0)
