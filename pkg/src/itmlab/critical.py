"""Critical orbits: landings, cycles, periodic intervals, ghost graph, unstable number."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction

from .attractor import components_and_boundary
from .core import (ITMError, IntervalSet, MINUS, PLUS, ParamVector, SignedPoint, apply,
                   branch_index, critical_index, critical_label, critical_points,
                   orbit_budget, orbit_record)
from .returnmap import ReturnMapData, return_maps, rotation_classification


class NotPeriodicError(ITMError):
    pass


class OrbitBudgetError(ITMError):
    pass


def opposite(side: str) -> str:
    return MINUS if side == PLUS else PLUS


# -- classification ----------------------------------------------------------

@dataclass(frozen=True)
class CriticalClass:
    point: SignedPoint
    kind: str                  # "C1" | "C2" | "undecided"
    time: int | None           # first landing time (C1) or cycle-closing time (C2)


def critical_classification(p: ParamVector, budget: int | None = None) -> dict[str, CriticalClass]:
    """C1 if the orbit lands on a discontinuity at a time ``>= 1`` before its cycle closes."""
    if budget is None:
        budget = orbit_budget(p)
    out = {}
    for c in critical_points(p):
        rec = orbit_record(p, c, budget)
        label = critical_label(p.beta.index(c.value), c.side)
        if not rec.periodic:
            early = [ld.time for ld in rec.landings if ld.time >= 1]
            out[label] = CriticalClass(c, "C1", early[0]) if early else CriticalClass(c, "undecided", None)
            continue
        close = rec.preperiod + rec.period
        early = [ld.time for ld in rec.landings if 1 <= ld.time < close]
        out[label] = CriticalClass(c, "C1", early[0]) if early else CriticalClass(c, "C2", close)
    return out


# -- orbit hits through the return maps ----------------------------------------

class OrbitHits:
    """Discontinuity values met by signed orbits, computed via the return maps.

    Inside X each orbit is periodic, and between two returns to a component
    only the landing points of that component meet a discontinuity, so the
    whole-orbit hit set is the union of landing chains along the ``R_J`` orbit.
    """

    def __init__(self, p: ParamVector, X: IntervalSet, maps: list[ReturnMapData] | None = None,
                 max_steps: int = 10 ** 7):
        self.p = p
        self.X = X
        self.maps = maps if maps is not None else return_maps(p, X)
        self.max_steps = max_steps
        self._rot = [rotation_classification(d) for d in self.maps]
        self._cache: dict[SignedPoint, frozenset[int]] = {}

    def component(self, x: SignedPoint) -> int | None:
        return self.X.component_of(x)

    def _in_x_hits(self, w: SignedPoint) -> frozenset[int]:
        k = self.component(w)
        d = self.maps[k]
        rot = self._rot[k]
        hits: set[int] = set()
        if rot.kind == "identity":
            ch = d.landing_chain_at(w)
            if ch is not None:
                hits.update(i for _, i in ch.hits)
            return frozenset(hits)
        if rot.kind == "rotation":
            q = rot.rho.denominator
            L = d.J.length
            for j, a in enumerate(d.a):
                if ((a - w.value) * q / L).denominator == 1:
                    key = (j, w.side)
                    if key in d.chains:
                        hits.update(i for _, i in d.chains[key].hits)
            return frozenset(hits)
        seen = set()
        cur = w
        while cur not in seen:
            if len(seen) > self.max_steps:
                raise OrbitBudgetError(f"return orbit of {w} exceeds {self.max_steps} steps")
            seen.add(cur)
            ch = d.landing_chain_at(cur)
            if ch is not None:
                hits.update(i for _, i in ch.hits)
            cur = d.R(cur)
        return frozenset(hits)

    def hits(self, w: SignedPoint) -> frozenset[int]:
        """Indices ``i`` with ``T^t(w)`` of value ``beta_i`` for some ``t >= 1``."""
        if w in self._cache:
            return self._cache[w]
        cur, hits, steps = w, set(), 0
        while not self.X.contains(cur):
            cur = apply(self.p, cur)
            steps += 1
            if steps > self.max_steps:
                raise OrbitBudgetError(f"{w} did not enter X within {self.max_steps} steps")
            i = critical_index(self.p, cur.value)
            if i is not None:
                hits.add(i)
        out = frozenset(hits | self._in_x_hits(cur))
        self._cache[w] = out
        return out


def _hits_for(p: ParamVector, X: IntervalSet, hits: OrbitHits | None) -> OrbitHits:
    return hits if hits is not None else OrbitHits(p, X)


# -- cycles and unstable number ------------------------------------------------

def cycles_partition(p: ParamVector, X: IntervalSet,
                     hits: OrbitHits | None = None) -> list[frozenset[int]]:
    """Classes of discontinuities (with a signed part in X) sharing an orbit."""
    oh = _hits_for(p, X, hits)
    parent: dict[int, int] = {}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    members = [c for c in critical_points(p) if X.contains(c)]
    for c in members:
        parent.setdefault(p.beta.index(c.value), p.beta.index(c.value))
    for c in members:
        i = p.beta.index(c.value)
        for k in oh.hits(c):
            parent.setdefault(k, k)
            parent[find(k)] = find(i)
    groups: dict[int, set[int]] = {}
    for i in parent:
        groups.setdefault(find(i), set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def unstable_number(p: ParamVector, X: IntervalSet, hits: OrbitHits | None = None) -> int:
    cycles = cycles_partition(p, X, hits)
    boundary = components_and_boundary(p, X).boundary_criticals
    return sum(len(c) - 1 for c in cycles) + len(boundary)


# -- maximal periodic intervals ------------------------------------------------

def translation_blocks(p: ParamVector) -> list[tuple[Fraction, Fraction]]:
    """Branch domains with adjacent equal-translation branches merged."""
    out = [(p.beta[0], p.beta[1], p.gamma[0])]
    for i in range(1, p.r):
        lo, hi, g = out[-1]
        if p.gamma[i] == g:
            out[-1] = (lo, p.beta[i + 1], g)
        else:
            out.append((p.beta[i], p.beta[i + 1], p.gamma[i]))
    return [(lo, hi) for lo, hi, _ in out]


def _block_of(blocks, x: SignedPoint) -> tuple[Fraction, Fraction]:
    starts = [lo for lo, _ in blocks]
    if x.side == PLUS:
        k = bisect.bisect_right(starts, x.value) - 1
    else:
        k = bisect.bisect_left(starts, x.value) - 1
    return blocks[k]


def maximal_periodic_interval(p: ParamVector, b: SignedPoint,
                              period: int) -> tuple[Fraction, Fraction]:
    """Largest ``[u, v)`` around ``b`` following b's translations for one period.

    Itineraries are compared by translation value, so a discontinuity between
    two branches with the same translation does not cut the interval.
    """
    if period < 1:
        raise NotPeriodicError("period must be >= 1")
    blocks = translation_blocks(p)
    lo, hi = Fraction(0), Fraction(1)
    cur, shift = b, Fraction(0)
    for t in range(period):
        if t > 0 and cur == b:
            raise NotPeriodicError(f"{b} has period {t} < {period}")
        u, v = _block_of(blocks, cur)
        lo, hi = max(lo, u - shift), min(hi, v - shift)
        g = p.gamma[branch_index(p, cur) - 1]
        cur = SignedPoint(cur.value + g, cur.side)
        shift += g
    if cur != b:
        raise NotPeriodicError(f"{b} is not periodic with period {period}")
    return lo, hi


def _signed_in(x: SignedPoint, iv: tuple[Fraction, Fraction]) -> bool:
    lo, hi = iv
    return lo <= x.value < hi if x.side == PLUS else lo < x.value <= hi


@dataclass(frozen=True)
class CorrespondenceEntry:
    index: int
    verdict: str               # "holds" | "fails" | "not-applicable"
    failing_side: str | None = None


def correspondence_report(p: ParamVector, X: IntervalSet,
                          budget: int | None = None) -> dict[int, CorrespondenceEntry]:
    if budget is None:
        budget = orbit_budget(p)
    out = {}
    for i in range(1, p.r):
        tested, failing = False, None
        for side in (PLUS, MINUS):
            b = SignedPoint(p.beta[i], side)
            if not X.contains(b):
                continue
            rec = orbit_record(p, b, budget)
            if not rec.periodic or rec.preperiod != 0:
                continue
            tested = True
            P = maximal_periodic_interval(p, b, rec.period)
            other = orbit_record(p, SignedPoint(p.beta[i], opposite(side)), budget)
            if not other.periodic:
                raise OrbitBudgetError(f"orbit of beta_{i} did not close within {budget}")
            if not any(_signed_in(x, P) for x in other.points):
                failing = failing or side
        if not tested:
            out[i] = CorrespondenceEntry(i, "not-applicable")
        else:
            out[i] = CorrespondenceEntry(i, "fails" if failing else "holds", failing)
    return out


def has_correspondence(report: dict[int, CorrespondenceEntry]) -> bool:
    return all(e.verdict != "fails" for e in report.values())


# -- ghost graph ------------------------------------------------------------

@dataclass(frozen=True)
class GhostGraph:
    nodes: tuple[SignedPoint, ...]
    edges: frozenset[tuple[SignedPoint, SignedPoint]]

    def successors(self, u: SignedPoint) -> list[SignedPoint]:
        return sorted(w for v, w in self.edges if v == u)

    def on_cycle(self, u: SignedPoint) -> bool:
        stack, seen = list(self.successors(u)), set()
        while stack:
            v = stack.pop()
            if v == u:
                return True
            if v in seen:
                continue
            seen.add(v)
            stack.extend(self.successors(v))
        return False

    def to_record(self, p: ParamVector) -> list[list[str]]:
        def lab(x):
            return critical_label(p.beta.index(x.value), x.side)
        return sorted([lab(u), lab(v)] for u, v in self.edges)


def ghost_graph(p: ParamVector, X: IntervalSet, hits: OrbitHits | None = None) -> GhostGraph:
    """Edge ``u -> w`` when the orbit of ``u`` meets the value of ``w`` and signs differ."""
    oh = _hits_for(p, X, hits)
    nodes = tuple(critical_points(p))
    edges = set()
    for u in nodes:
        for k in oh.hits(u):
            edges.add((u, SignedPoint(p.beta[k], opposite(u.side))))
    return GhostGraph(nodes, frozenset(edges))


def ghost_graph_and_a3(p: ParamVector, X: IntervalSet,
                       hits: OrbitHits | None = None) -> tuple[GhostGraph, frozenset[SignedPoint]]:
    g = ghost_graph(p, X, hits)
    bad = frozenset(u for u in g.nodes if not X.contains(u) and g.on_cycle(u))
    return g, bad


# -- critical connections -----------------------------------------------------

@dataclass(frozen=True)
class Connection:
    """``T^time(source)`` has the value of discontinuity ``target`` (same side)."""

    source: SignedPoint
    target: int
    time: int


def first_connection(p: ParamVector, c: SignedPoint, budget: int) -> Connection | None:
    rec = orbit_record(p, c, budget)
    for ld in rec.landings:
        if ld.time >= 1:
            return Connection(c, ld.index, ld.time)
    return None
