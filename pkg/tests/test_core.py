from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from itmlab.core import (
    MINUS, PLUS, IntervalSet, ParamVector, SentinelError, SignedPoint, apply,
    entry_counts_and_translation, image_interval_set, image_pieces, is_valid, iterate,
    orbit_record, parse_rat, validate_itm,
)
from itmlab.corpus import IDENTITY, M2
from strategies import maps


def sp(v, s=PLUS):
    return SignedPoint(F(v), s)


def test_validate_examples():
    assert validate_itm(M2) == []
    assert validate_itm(IDENTITY) == []
    bad = validate_itm(ParamVector.make(["0", "1/2", "1"], ["3/4", "0"]))
    assert [(v.constraint, v.index) for v in bad] == [("gamma_high", 1)]


def test_parse_rat():
    assert parse_rat("-3/6") == F(-1, 2)
    assert parse_rat("7") == 7
    for bad in ("1/0", "0.5", "x", ""):
        with pytest.raises(ValueError):
            parse_rat(bad)


def test_apply_examples():
    assert apply(M2, sp("1/2")) == sp(0)
    assert apply(M2, sp("1/2", MINUS)) == sp("3/4", MINUS)
    assert apply(IDENTITY, sp("1/3", MINUS)) == sp("1/3", MINUS)
    with pytest.raises(SentinelError):
        apply(M2, sp(0, MINUS))
    with pytest.raises(SentinelError):
        apply(M2, sp(1, PLUS))


def test_image_examples():
    unit = IntervalSet.unit()
    assert image_interval_set(M2, unit) == IntervalSet([(F(0), F(3, 4))])
    assert image_interval_set(M2, IntervalSet([(F(0), F(1, 4))])) == IntervalSet([(F(1, 4), F(1, 2))])
    S = IntervalSet([(F(1, 5), F(2, 5)), (F(3, 5), F(4, 5))])
    assert image_interval_set(IDENTITY, S) == S


def test_orbit_examples():
    rec = orbit_record(M2, sp(0), 100)
    assert (rec.preperiod, rec.period) == (0, 3)
    assert [x.value for x in rec.points] == [0, F(1, 4), F(1, 2)]
    assert [(ld.time, ld.index) for ld in rec.landings] == [(2, 1)]
    rec = orbit_record(M2, sp("9/10"), 100)
    assert (rec.preperiod, rec.period) == (1, 3)
    assert [x.value for x in rec.cycle()] == [F(2, 5), F(13, 20), F(3, 20)]
    rec = orbit_record(IDENTITY, sp("1/7", MINUS), 5)
    assert (rec.preperiod, rec.period) == (0, 1)


def test_entry_counts_examples():
    assert entry_counts_and_translation(M2, sp("1/3"), 0) == ((0, 0), 0)
    assert entry_counts_and_translation(M2, sp(0), 3) == ((2, 1), 0)
    assert entry_counts_and_translation(M2, sp("1/2"), 1) == ((0, 1), F(-1, 2))


def test_interval_set_normalizes():
    S = IntervalSet([(F(1, 2), F(3, 4)), (F(0), F(1, 4)), (F(1, 4), F(1, 2))])
    assert S.intervals == ((F(0), F(3, 4)),)
    T = IntervalSet([(F(1, 8), F(1, 4)), (F(1, 2), F(1))])
    assert S & T == IntervalSet([(F(1, 8), F(1, 4)), (F(1, 2), F(3, 4))])
    assert S - T == IntervalSet([(F(0), F(1, 8)), (F(1, 4), F(1, 2))])
    assert (S | T) == IntervalSet([(F(0), F(1))])
    assert sp("3/4", MINUS) in S and sp("3/4") not in S


signed = st.builds(lambda n, q, s: (F(n % q, q), s), st.integers(0, 200), st.integers(1, 24),
                   st.sampled_from([PLUS, MINUS]))


@given(maps(), st.lists(signed, min_size=1, max_size=10))
def test_apply_preserves_side(p, points):
    for v, s in points:
        if (v == 0 and s == MINUS):
            continue
        y = apply(p, SignedPoint(v, s))
        assert y.side == s


@given(maps(), signed, st.integers(0, 30))
def test_translation_matches_iteration(p, x, n):
    v, s = x
    if v == 0 and s == MINUS:
        s = PLUS
    start = SignedPoint(v, s)
    counts, tr = entry_counts_and_translation(p, start, n)
    assert sum(counts) == n
    assert tr == iterate(p, start, n).value - v


@given(maps(max_den=10), signed)
def test_rational_orbits_close_within_d_squared(p, x):
    v, s = x
    if v == 0 and s == MINUS:
        s = PLUS
    D = p.denominator_lcm()
    rec = orbit_record(p, SignedPoint(v, s), max(D * D, 4 * D))
    assert rec.periodic
    assert rec.points[rec.preperiod] == iterate(p, rec.points[rec.preperiod], rec.period)
    assert all(ld.side == s and ld.time < rec.preperiod + rec.period for ld in rec.landings)


@given(maps(), st.lists(st.tuples(st.integers(0, 24), st.integers(1, 24)), max_size=4))
def test_image_measure_bound(p, raw):
    S = IntervalSet([(F(min(a, b), 24), F(max(a, b), 24)) for a, b in raw if min(a, b) < max(a, b)])
    img = image_interval_set(p, S)
    pieces = image_pieces(p, S)
    total = sum((b - a for a, b in pieces), F(0))
    assert img.measure() <= S.measure()
    assert total == S.measure()
    overlap = any(max(a, c) < min(b, d) for i, (a, b) in enumerate(pieces)
                  for (c, d) in pieces[i + 1:])
    assert (img.measure() == S.measure()) == (not overlap)


@given(maps())
def test_strategy_maps_are_valid(p):
    assert is_valid(p)
