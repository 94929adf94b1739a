"""First-return maps to interval components of the attractor."""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .attractor import IntervalComponent, components
from .core import (ITMError, IntervalSet, MINUS, PLUS, ParamVector, SignedPoint,
                   branch_index, critical_index, image_interval_set)


class ReturnBudgetError(ITMError):
    pass


@dataclass(frozen=True)
class Branch:
    """Continuity interval ``[lo, hi)`` of ``R_J``."""

    lo: Fraction
    hi: Fraction
    return_time: int
    translation: Fraction
    counts: tuple[int, ...]

    @property
    def image(self) -> tuple[Fraction, Fraction]:
        return self.lo + self.translation, self.hi + self.translation


@dataclass(frozen=True)
class Chain:
    """Signed orbit of a landing point up to (excluding) its return to J."""

    start: SignedPoint
    itinerary: tuple[int, ...]
    hits: tuple[tuple[int, int], ...]      # (time, discontinuity index)
    returned: SignedPoint

    @property
    def return_time(self) -> int:
        return len(self.itinerary)

    @property
    def m(self) -> int:
        return len(self.hits)

    def counts(self, t0: int, t1: int, r: int) -> tuple[int, ...]:
        """Branch visit counts over times ``t0 <= t < t1``."""
        out = [0] * r
        for i in self.itinerary[t0:t1]:
            out[i - 1] += 1
        return tuple(out)


@dataclass(frozen=True)
class ReturnMapData:
    J: IntervalComponent
    a: tuple[Fraction, ...]
    branches: tuple[Branch, ...]
    sigma: tuple[int, ...]
    landing_times: tuple[int, ...]         # l_j for j = 1..N-1
    landing_index: tuple[int, ...]         # ind(beta(j)) for j = 1..N-1
    chains: dict                           # (j, side) -> Chain
    r: int

    @property
    def N(self) -> int:
        return len(self.branches)

    @property
    def tau(self) -> tuple[int, ...]:
        out = [0] * self.N
        for j, s in enumerate(self.sigma, start=1):
            out[s - 1] = j
        return tuple(out)

    def sig(self, j: int) -> int:
        return self.sigma[j - 1]

    def tau_of(self, k: int) -> int:
        return self.tau[k - 1]

    def branch(self, j: int) -> Branch:
        return self.branches[j - 1]

    def chain(self, j: int, side: str) -> Chain:
        return self.chains[(j, side)]

    def boundary_lands(self, side: str) -> bool:
        """Whether ``a_0+`` (side '+') or ``a_N-`` (side '-') hits a discontinuity."""
        j = 0 if side == PLUS else self.N
        return self.chains[(j, side)].m > 0

    def critical_values(self) -> list[Fraction]:
        """Touching points of consecutive branch images, left to right."""
        tau = self.tau
        return [self.branch(tau[k]).image[1] for k in range(self.N - 1)]

    def locate(self, x: SignedPoint) -> int:
        """1-based branch containing the signed point ``x`` of J."""
        a = self.a
        if x.side == PLUS:
            if not a[0] <= x.value < a[-1]:
                raise ValueError(f"{x} not in J")
            return bisect.bisect_right(a, x.value)
        if not a[0] < x.value <= a[-1]:
            raise ValueError(f"{x} not in J")
        return bisect.bisect_left(a, x.value)

    def R(self, x: SignedPoint) -> SignedPoint:
        j = self.locate(x)
        return SignedPoint(x.value + self.branch(j).translation, x.side)

    def landing_chain_at(self, x: SignedPoint) -> Chain | None:
        """Chain of ``x`` if it is one of the signed landing points of J."""
        k = bisect.bisect_left(self.a, x.value)
        if k >= len(self.a) or self.a[k] != x.value:
            return None
        if x.side == PLUS and k == self.N:
            return None
        if x.side == MINUS and k == 0:
            return None
        return self.chains[(k, x.side)]

    def to_record(self) -> dict:
        return {
            "J": [str(self.J.lo), str(self.J.hi)],
            "N": self.N,
            "a": [str(v) for v in self.a],
            "sigma": list(self.sigma),
            "branches": [
                {"domain": [str(b.lo), str(b.hi)], "return_time": b.return_time,
                 "translation": str(b.translation), "counts": list(b.counts)}
                for b in self.branches
            ],
            "landing_times": list(self.landing_times),
            "landing_index": list(self.landing_index),
            "chains": [
                {"j": j, "side": s, "hits": [[t, i] for t, i in c.hits],
                 "return_time": c.return_time, "returns_to": str(c.returned)}
                for (j, s), c in sorted(self.chains.items())
            ],
        }


def _chain(p: ParamVector, J: IntervalComponent, start: SignedPoint, budget: int) -> Chain:
    itin, hits = [], []
    cur = start
    for t in range(budget):
        idx = critical_index(p, cur.value)
        if idx is not None:
            hits.append((t, idx))
        i = branch_index(p, cur)
        itin.append(i)
        cur = SignedPoint(cur.value + p.gamma[i - 1], cur.side)
        if J.contains(cur):
            return Chain(start, tuple(itin), tuple(hits), cur)
    raise ReturnBudgetError(f"{start} did not return to [{J.lo}, {J.hi}) within {budget} steps")


def compute_return_map(p: ParamVector, X: IntervalSet, J: IntervalComponent,
                       budget: int | None = None) -> ReturnMapData:
    """Worklist construction of ``R_J``.

    Pieces of J are pushed forward, cut at interior discontinuities (and at
    J's endpoints once ``t >= 1``); a piece that sits inside J at ``t >= 1``
    is a finished continuity interval.
    """
    if budget is None:
        budget = 4 * (p.denominator_lcm() + 2)
    x, y = J.lo, J.hi
    r = p.r
    work = deque([(x, y, Fraction(0), (0,) * r, 0)])
    done: list[Branch] = []
    splits: dict[Fraction, tuple[int, int]] = {}
    while work:
        u, v, shift, counts, t = work.popleft()
        if t > budget:
            raise ReturnBudgetError(f"return map to [{x}, {y}) exceeded {budget} steps")
        if t >= 1:
            if x <= u and v <= y:
                done.append(Branch(u - shift, v - shift, t, shift, counts))
                continue
            cut = [c for c in (x, y) if u < c < v]
            if cut:
                edges = [u] + cut + [v]
                for lo, hi in zip(edges, edges[1:]):
                    work.append((lo, hi, shift, counts, t))
                continue
        lo = u
        i = bisect.bisect_right(p.beta, u)
        while lo < v:
            hi = min(v, p.beta[i])
            if hi < v:
                splits.setdefault(hi - shift, (t, i))
            g = p.gamma[i - 1]
            c = list(counts)
            c[i - 1] += 1
            work.append((lo + g, hi + g, shift + g, tuple(c), t + 1))
            lo = hi
            i += 1
    done.sort(key=lambda b: b.lo)
    a = (x,) + tuple(b.hi for b in done[:-1]) + (y,)
    for prev, nxt in zip(done, done[1:]):
        if prev.hi != nxt.lo:
            raise ITMError("return-map branches do not tile J")
    if set(a[1:-1]) != set(splits):
        raise ITMError("landing points do not match the branch boundaries")
    order = sorted(range(len(done)), key=lambda k: done[k].image[0])
    sigma = [0] * len(done)
    for rank, k in enumerate(order, start=1):
        sigma[k] = rank
    land_t = tuple(splits[v][0] for v in a[1:-1])
    land_i = tuple(splits[v][1] for v in a[1:-1])
    N = len(done)
    chain_budget = max(b.return_time for b in done) + 1
    chains = {(0, PLUS): _chain(p, J, SignedPoint(x, PLUS), chain_budget),
              (N, MINUS): _chain(p, J, SignedPoint(y, MINUS), chain_budget)}
    for j in range(1, N):
        for side in (PLUS, MINUS):
            chains[(j, side)] = _chain(p, J, SignedPoint(a[j], side), chain_budget)
    return ReturnMapData(J, a, tuple(done), tuple(sigma), land_t, land_i, chains, r)


def return_maps(p: ParamVector, X: IntervalSet,
                budget: int | None = None) -> list[ReturnMapData]:
    return [compute_return_map(p, X, J, budget) for J in components(X)]


def is_identity(d: ReturnMapData) -> bool:
    return all(b.translation == 0 for b in d.branches)


def classify_component(d: ReturnMapData) -> str:
    """Trivial when ``R_J`` is the identity (always the case for N = 1)."""
    return "dynamically_trivial" if is_identity(d) else "dynamically_non_trivial"


@dataclass(frozen=True)
class Rotation:
    kind: str                      # "identity" | "rotation" | "not_a_rotation"
    rho: Fraction | None = None


def rotation_classification(d: ReturnMapData) -> Rotation:
    """Identify ``R_J``, rescaled to ``[0, 1)``, as identity or a rotation."""
    L = d.J.length
    if is_identity(d):
        return Rotation("identity")
    if d.N == 2:
        b1, b2 = d.branches
        lam = (b1.hi - b1.lo) / L
        rho = b1.translation / L
        if rho == 1 - lam and b2.translation / L == -lam:
            return Rotation("rotation", rho)
    return Rotation("not_a_rotation")


def branch_images(d: ReturnMapData) -> IntervalSet:
    return IntervalSet([b.image for b in d.branches])


def orbit_pieces(p: ParamVector, d: ReturnMapData) -> list[tuple[int, int, tuple]]:
    """``(j, t, [lo, hi))`` for every iterate ``T^t(J_j)``, ``0 <= t < r_j``."""
    out = []
    for j, b in enumerate(d.branches, start=1):
        piece = IntervalSet([(b.lo, b.hi)])
        for t in range(b.return_time):
            (iv,) = piece.intervals
            out.append((j, t, iv))
            piece = image_interval_set(p, piece)
    return out


def iterate_return(d: ReturnMapData, x: SignedPoint, n: int) -> SignedPoint:
    for _ in range(n):
        x = d.R(x)
    return x


def first_return(p: ParamVector, J: IntervalComponent, x: SignedPoint,
                 budget: int) -> tuple[SignedPoint, int]:
    """Brute-force ``R_J(x)`` by iterating T; returns the point and the time."""
    cur = x
    for t in range(1, budget + 1):
        i = branch_index(p, cur)
        cur = SignedPoint(cur.value + p.gamma[i - 1], cur.side)
        if J.contains(cur):
            return cur, t
    raise ReturnBudgetError(f"{x} did not return within {budget} steps")


def sigma_string(sigma: Sequence[int]) -> str:
    return "(" + " ".join(map(str, sigma)) + ")"
