"""Attractor chain ``X_n = T^n(I)`` and its interval components."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import (ITMError, IntervalSet, PLUS, ParamVector, SignedPoint, critical_points,
                   image_interval_set, require_valid)

DEFAULT_BUDGET_CEILING = 10 ** 9


class BudgetCeilingError(ITMError):
    pass


class NotFiniteTypeError(ITMError):
    pass


@dataclass(frozen=True)
class AttractorResult:
    chain: tuple[IntervalSet, ...]
    finite_type: bool
    n_star: int | None
    budget: int

    @property
    def X(self) -> IntervalSet:
        return self.chain[-1]

    @property
    def verdict(self) -> str:
        return "finite_type" if self.finite_type else "undecided"

    def to_record(self) -> dict:
        return {
            "verdict": self.verdict,
            "n_star": self.n_star if self.finite_type else None,
            "budget": self.budget,
            "X": [[str(a), str(b)] for a, b in self.X],
        }


@dataclass(frozen=True)
class IntervalComponent:
    lo: Fraction
    hi: Fraction
    index: int

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def contains(self, x: SignedPoint) -> bool:
        if x.side == PLUS:
            return self.lo <= x.value < self.hi
        return self.lo < x.value <= self.hi


def stabilization_budget(p: ParamVector, ceiling: int | None = None) -> int:
    """Iterations that guarantee ``compute_attractor`` decides a rational map.

    Every ``X_n`` is a union of cells of the ``1/D`` grid and the chain is
    strictly decreasing before it stabilizes, so ``D + 1`` images suffice.
    """
    if ceiling is None:
        ceiling = DEFAULT_BUDGET_CEILING
    D = p.denominator_lcm()
    if D + 1 > ceiling:
        raise BudgetCeilingError(f"denominator lcm {D} exceeds ceiling {ceiling}")
    return D + 1


def compute_attractor(p: ParamVector, budget: int | None = None) -> AttractorResult:
    require_valid(p)
    if budget is None:
        budget = stabilization_budget(p)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    chain = [IntervalSet.unit()]
    for n in range(budget):
        nxt = image_interval_set(p, chain[-1])
        if nxt == chain[-1]:
            return AttractorResult(tuple(chain), True, n, budget)
        chain.append(nxt)
    return AttractorResult(tuple(chain), False, None, budget)


def components(X: IntervalSet) -> list[IntervalComponent]:
    return [IntervalComponent(a, b, k) for k, (a, b) in enumerate(X)]


@dataclass(frozen=True)
class ComponentsReport:
    components: tuple[IntervalComponent, ...]
    boundary_criticals: frozenset[int]
    signed_membership: dict

    def in_X(self, index: int, side: str) -> bool:
        return self.signed_membership[(index, side)]


def components_and_boundary(p: ParamVector, X: IntervalSet) -> ComponentsReport:
    if image_interval_set(p, X) != X:
        raise NotFiniteTypeError("X is not invariant: T(X) != X")
    comps = tuple(components(X))
    ends = X.endpoints()
    boundary = frozenset(i for i in range(1, p.r) if p.beta[i] in ends)
    membership = {}
    for c in critical_points(p):
        i = p.beta.index(c.value)
        membership[(i, c.side)] = X.contains(c)
    return ComponentsReport(comps, boundary, membership)
