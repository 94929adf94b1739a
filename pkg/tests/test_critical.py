from fractions import Fraction as F

from hypothesis import given

from itmlab.attractor import compute_attractor
from itmlab.core import (
    MINUS, PLUS, IntervalSet, SignedPoint, critical_points, image_interval_set, itinerary,
    orbit_budget, orbit_record,
)
from itmlab.corpus import IDENTITY, M2, M3
from itmlab.critical import (
    OrbitHits, correspondence_report, critical_classification, cycles_partition, ghost_graph,
    ghost_graph_and_a3, has_correspondence, maximal_periodic_interval, unstable_number,
)
from itmlab.stability import stability_report
from strategies import maps


def X_of(p):
    return compute_attractor(p).X


def sp(v, s=PLUS):
    return SignedPoint(F(v), s)


def test_classification_examples():
    cls = critical_classification(M2)
    assert cls["b1+"].kind == "C2" and cls["b1+"].time == 3
    cls = critical_classification(M3)
    assert (cls["b1-"].kind, cls["b1-"].time) == ("C1", 1)
    assert all(c.kind == "C2" and c.time == 1 for c in critical_classification(IDENTITY).values())


def test_cycles_examples():
    assert cycles_partition(M2, X_of(M2)) == [frozenset({1})]
    assert cycles_partition(M3, X_of(M3)) == [frozenset({1}), frozenset({2})]
    assert cycles_partition(IDENTITY, X_of(IDENTITY)) == [frozenset({1})]


def test_periodic_interval_examples():
    assert maximal_periodic_interval(M2, sp("1/2"), 3) == (F(1, 2), F(3, 4))
    assert maximal_periodic_interval(M2, sp("1/2", MINUS), 3) == (F(1, 4), F(1, 2))
    assert maximal_periodic_interval(M3, sp("1/3"), 1) == (F(1, 3), F(2, 3))


def test_correspondence_examples():
    assert correspondence_report(M2, X_of(M2))[1].verdict == "holds"
    assert correspondence_report(M3, X_of(M3))[1].verdict == "holds"
    assert has_correspondence(correspondence_report(IDENTITY, X_of(IDENTITY)))


def test_ghost_graph_examples():
    g, bad = ghost_graph_and_a3(M3, X_of(M3))
    assert (sp("1/3", MINUS), sp("2/3", PLUS)) in g.edges
    assert (sp("2/3", PLUS), sp("1/3", MINUS)) in g.edges
    assert bad == {sp("2/3", PLUS), sp("1/3", MINUS)}
    # The M2 orbits of 1/2+ and 1/2- meet the value 1/2 only when the period closes.
    g, bad = ghost_graph_and_a3(M2, X_of(M2))
    assert g.to_record(M2) == [["b1+", "b1-"], ["b1-", "b1+"]]
    assert not bad
    g, bad = ghost_graph_and_a3(IDENTITY, X_of(IDENTITY))
    assert g.to_record(IDENTITY) == [["b1+", "b1-"], ["b1-", "b1+"]]
    assert not bad


def test_unstable_number_examples():
    assert unstable_number(M2, X_of(M2)) == 0
    assert unstable_number(M3, X_of(M3)) == 2
    assert unstable_number(IDENTITY, X_of(IDENTITY)) == 0


@given(maps(max_den=10))
def test_cycle_symmetry(p):
    X = X_of(p)
    oh = OrbitHits(p, X)
    inside = [c for c in critical_points(p) if X.contains(c)]
    orbit = {}
    for c in inside:
        i = p.beta.index(c.value)
        orbit.setdefault(i, set()).update(oh.hits(c))
    for i, hit in orbit.items():
        for k in hit:
            if k in orbit:
                assert i in orbit[k]


@given(maps(max_den=10))
def test_ghost_edges_alternate_sign(p):
    g = ghost_graph(p, X_of(p))
    assert all(u.side != w.side for u, w in g.edges)


@given(maps(max_den=10))
def test_periodic_interval_properties(p):
    budget = orbit_budget(p)
    for c in critical_points(p):
        rec = orbit_record(p, c, budget)
        if rec.preperiod != 0:
            continue
        u, v = maximal_periodic_interval(p, c, rec.period)
        assert (u <= c.value < v) if c.side == PLUS else (u < c.value <= v)
        tr = sum((y.value - x.value for x, y in zip(rec.points, rec.points[1:] + rec.points[:1])), F(0))
        assert tr == 0
        ref = [p.gamma[i - 1] for i in itinerary(p, c, rec.period)]
        for end in (SignedPoint(u, PLUS), SignedPoint(v, MINUS)):
            assert [p.gamma[i - 1] for i in itinerary(p, end, rec.period)] == ref


@given(maps(max_den=10))
def test_correspondence_tiling(p):
    X = X_of(p)
    if not has_correspondence(correspondence_report(p, X)):
        return
    budget = orbit_budget(p)
    tiles = []
    for c in critical_points(p):
        # Either signed side may carry the tiling (mirror symmetry).
        if not X.contains(c):
            continue
        rec = orbit_record(p, c, budget)
        if rec.preperiod != 0:
            continue
        P = IntervalSet([maximal_periodic_interval(p, c, rec.period)])
        union = P
        for _ in range(rec.period):
            P = image_interval_set(p, P)
            union = union | P
        tiles.append(union)
    for lo, hi in X:
        assert any(IntervalSet([(lo, hi)]).issubset(t) for t in tiles)


@given(maps(max_den=10))
def test_zero_unstable_number_with_correspondence(p):
    X = X_of(p)
    if unstable_number(p, X) or not has_correspondence(correspondence_report(p, X)):
        return
    rep = stability_report(p)
    assert rep.a1.passed and rep.a2.passed and rep.matching.passed
