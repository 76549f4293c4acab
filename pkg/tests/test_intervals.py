from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from planroute.intervals import IntervalSet, rotate_assignment

F = Fraction
GRID = [F(k, 240) for k in range(240)]  # sample points; all test endpoints are multiples of 1/60


@st.composite
def interval_sets(draw):
    pairs = draw(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)), max_size=5))
    return IntervalSet([(F(min(a, b), 60), F(max(a, b), 60)) for a, b in pairs])


def points(s):
    return {x for x in GRID if s.contains(x)}


def test_construction_merges_and_drops_empty():
    s = IntervalSet([(F(1, 2), F(3, 4)), (F(0), F(1, 4)), (F(1, 4), F(1, 3)), (F(1, 5), F(1, 5))])
    assert s.pieces == ((F(0), F(1, 3)), (F(1, 2), F(3, 4)))
    assert s.measure == F(7, 12)


def test_out_of_range_is_rejected():
    with pytest.raises(ValueError):
        IntervalSet([(F(-1, 2), F(1, 2))])
    with pytest.raises(ValueError):
        IntervalSet([(F(1, 2), F(1, 4))])


def test_segments():
    assert IntervalSet.segment(1, 4).pieces == ((F(0), F(1, 4)),)
    assert IntervalSet.segment(20, 20).pieces == ((F(19, 20), F(1)),)
    with pytest.raises(ValueError):
        IntervalSet.segment(0, 4)


def test_rotation_examples():
    s, p = rotate_assignment(F(0), F(1, 2))
    assert s == IntervalSet([(F(0), F(1, 2))]) and p == F(1, 2)
    s, p = rotate_assignment(p, F(1, 2))
    assert s == IntervalSet([(F(1, 2), F(1))]) and p == 0
    s, p = rotate_assignment(F(9, 10), F(4, 5))
    assert s == IntervalSet([(F(0), F(7, 10)), (F(9, 10), F(1))]) and p == F(7, 10)
    assert rotate_assignment(F(1, 3), F(1)) == (IntervalSet.full(), F(1, 3))
    assert rotate_assignment(F(1, 3), F(0)) == (IntervalSet(), F(1, 3))


def test_rotation_rejects_bad_arguments():
    with pytest.raises(ValueError):
        rotate_assignment(F(1), F(1, 2))
    with pytest.raises(ValueError):
        rotate_assignment(F(0), F(3, 2))


def test_take_cyclic_wraps():
    s = IntervalSet([(F(0), F(1, 4)), (F(1, 2), F(3, 4))])
    taken, pos = s.take_cyclic(F(5, 8), F(1, 4))
    assert taken == IntervalSet([(F(0), F(1, 8)), (F(5, 8), F(3, 4))])
    assert pos == F(1, 8)
    assert s.take_cyclic(F(0), F(1)) == (s, F(0))


@given(interval_sets(), interval_sets())
def test_set_algebra_matches_point_sampling(a, b):
    pa, pb = points(a), points(b)
    assert points(a | b) == pa | pb
    assert points(a & b) == pa & pb
    assert points(a - b) == pa - pb
    assert points(a.complement()) == set(GRID) - pa
    assert a.isdisjoint(b) == (not (a & b))
    assert a.issubset(b) == ((a & b) == a)


@given(interval_sets())
def test_measure_matches_sampling(a):
    # endpoints on the 1/60 grid, sampled at 1/240
    assert a.measure == F(len(points(a)), 240)
    assert (a | a.complement()) == IntervalSet.full()
    assert a.measure + a.complement().measure == 1


@given(st.integers(0, 59), st.integers(0, 60))
def test_rotation_measure_and_pointer(p, f):
    pointer, fraction = F(p, 60), F(f, 60)
    s, nxt = rotate_assignment(pointer, fraction)
    assert s.measure == fraction
    if 0 < fraction < 1:
        assert s.contains(pointer)
        assert nxt == (pointer + fraction) % 1


@given(st.integers(1, 12))
def test_half_rotation_alternates(k):
    pointer = F(0)
    sets = []
    for _ in range(2 * k):
        s, pointer = rotate_assignment(pointer, F(1, 2))
        sets.append(s)
    assert all(x == sets[0] for x in sets[::2])
    assert all(x == sets[0].complement() for x in sets[1::2])
