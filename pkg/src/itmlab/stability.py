"""ACC (A1, A2, A3) and Matching, and the stability verdict they determine."""

from __future__ import annotations

from dataclasses import dataclass, field

from .attractor import AttractorResult, compute_attractor
from .core import ITMError, MINUS, PLUS, ParamVector, SignedPoint, critical_label
from .critical import OrbitHits, ghost_graph_and_a3
from .returnmap import ReturnMapData, classify_component, return_maps


class MatchingNotSatisfiedError(ITMError):
    pass


@dataclass(frozen=True)
class Check:
    passed: bool
    witness: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {"pass": self.passed, "witness": list(self.witness)}


def _point_name(j: int, side: str) -> str:
    return f"a{j}{side}"


def _comp_name(d: ReturnMapData) -> str:
    return f"[{d.J.lo}, {d.J.hi})"


def check_a1(maps: list[ReturnMapData]) -> Check:
    """Each landing point meets at most one critical value before returning."""
    bad = []
    for d in maps:
        for (j, side), ch in sorted(d.chains.items()):
            if ch.m > 1:
                hit = ",".join(f"b{i}@{t}" for t, i in ch.hits)
                bad.append(f"{_comp_name(d)} {_point_name(j, side)} hits {hit}")
    return Check(not bad, tuple(bad))


def check_a2(maps: list[ReturnMapData]) -> Check:
    """Boundary points of non-trivial components never land."""
    bad = []
    for d in maps:
        if classify_component(d) == "dynamically_trivial":
            continue
        for j, side in ((0, PLUS), (d.N, MINUS)):
            ch = d.chain(j, side)
            if ch.m:
                bad.append(f"{_comp_name(d)} {_point_name(j, side)} lands on b{ch.hits[0][1]}")
    return Check(not bad, tuple(bad))


def check_matching(maps: list[ReturnMapData]) -> Check:
    """Non-trivial components have exactly one interior landing point."""
    bad = [f"{_comp_name(d)} has N={d.N}" for d in maps
           if classify_component(d) != "dynamically_trivial" and d.N != 2]
    return Check(not bad, tuple(bad))


@dataclass(frozen=True)
class StabilityReport:
    finite_type: bool
    a1: Check | None
    a2: Check | None
    a3: Check | None
    matching: Check | None
    attractor: AttractorResult = field(repr=False, compare=False)
    maps: tuple[ReturnMapData, ...] = field(default=(), repr=False, compare=False)

    @property
    def verdict(self) -> str:
        if not self.finite_type:
            return "undecided"
        ok = all(c.passed for c in (self.a1, self.a2, self.a3, self.matching))
        return "stable" if ok else "unstable"

    def to_record(self) -> dict:
        rec = {"finite_type": self.finite_type, "verdict": self.verdict}
        for name in ("a1", "a2", "a3", "matching"):
            c = getattr(self, name)
            rec[name] = None if c is None else c.to_record()
        return rec


def stability_report(p: ParamVector, budget: int | None = None) -> StabilityReport:
    att = compute_attractor(p, budget)
    if not att.finite_type:
        return StabilityReport(False, None, None, None, None, att)
    X = att.X
    maps = return_maps(p, X)
    _, bad = ghost_graph_and_a3(p, X, OrbitHits(p, X, maps))
    a3 = Check(not bad, tuple(critical_label(p.beta.index(x.value), x.side) for x in sorted(bad)))
    return StabilityReport(True, check_a1(maps), check_a2(maps), a3, check_matching(maps),
                           att, tuple(maps))


def matching_identities_check(p: ParamVector, d: ReturnMapData) -> bool:
    """``J = [R(a+), R(a-))`` and ``R^2(a-)`` touches ``R^2(a+)``."""
    if classify_component(d) == "dynamically_trivial":
        return True
    if d.N != 2:
        raise MatchingNotSatisfiedError(f"component {_comp_name(d)} has N={d.N}")
    a = d.a[1]
    up, down = d.R(SignedPoint(a, PLUS)), d.R(SignedPoint(a, MINUS))
    if up.value != d.J.lo or down.value != d.J.hi:
        return False
    return d.R(down).touches(d.R(up))
