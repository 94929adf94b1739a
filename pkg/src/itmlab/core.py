"""Exact map representation, signed points, interval sets and orbits.

All numbers are :class:`fractions.Fraction`.  A map ``T`` on ``[0, 1)`` is
given by discontinuities ``0 = beta[0] < ... < beta[r] = 1`` and translation
factors ``gamma[0..r-1]``; branch ``i`` (1-based) is ``[beta[i-1], beta[i])``
and is moved by ``gamma[i-1]``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

Rat = Fraction

PLUS = "+"
MINUS = "-"


class ITMError(Exception):
    """Base class for errors raised by itmlab."""


class InvalidMapError(ITMError):
    """Raised when a parameter vector violates the polytope constraints."""


class SentinelError(ITMError):
    """Raised when ``0-`` or ``1+`` is fed to the map."""


def parse_rat(text: str | int | Fraction) -> Fraction:
    """Parse ``"p/q"`` or an integer string into a Fraction.

    Floats are rejected on purpose; ``"0.5"`` is not a rational literal here.
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, bool):
        raise ValueError(f"not a rational literal: {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if not isinstance(text, str):
        raise ValueError(f"not a rational literal: {text!r}")
    s = text.strip()
    num, sep, den = s.partition("/")
    try:
        n = int(num)
        d = int(den) if sep else 1
    except ValueError:
        raise ValueError(f"not a rational literal: {text!r}") from None
    if d == 0:
        raise ValueError(f"zero denominator in {text!r}")
    return Fraction(n, d)


def fmt_rat(x: Fraction) -> str:
    return str(Fraction(x))


@dataclass(frozen=True)
class ParamVector:
    """Parameters ``(gamma, beta)`` of an interval translation map."""

    beta: tuple[Fraction, ...]
    gamma: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(Fraction(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(Fraction(g) for g in self.gamma))
        if len(self.beta) != len(self.gamma) + 1:
            raise InvalidMapError(
                f"need len(beta) == len(gamma) + 1, got {len(self.beta)} and {len(self.gamma)}")

    @classmethod
    def make(cls, beta: Iterable, gamma: Iterable) -> "ParamVector":
        return cls(tuple(parse_rat(b) for b in beta), tuple(parse_rat(g) for g in gamma))

    @property
    def r(self) -> int:
        return len(self.gamma)

    def denominator_lcm(self) -> int:
        d = 1
        for x in self.beta + self.gamma:
            d = math.lcm(d, x.denominator)
        return d

    def as_vector(self) -> tuple[Fraction, ...]:
        """``(gamma_1..gamma_r, beta_1..beta_{r-1})``."""
        return self.gamma + self.beta[1:-1]

    @classmethod
    def from_vector(cls, vec: Sequence[Fraction], r: int) -> "ParamVector":
        vec = tuple(Fraction(v) for v in vec)
        return cls((Fraction(0),) + vec[r:] + (Fraction(1),), vec[:r])

    def distance(self, other: "ParamVector") -> Fraction:
        """Sup-norm distance between parameter vectors."""
        return max(abs(a - b) for a, b in zip(self.as_vector(), other.as_vector()))

    def mirrored(self) -> "ParamVector":
        """Conjugate by ``x -> 1 - x``; signed points swap sides."""
        beta = tuple(1 - b for b in reversed(self.beta))
        gamma = tuple(-g for g in reversed(self.gamma))
        return ParamVector(beta, gamma)

    def __str__(self):
        b = ", ".join(map(str, self.beta))
        g = ", ".join(map(str, self.gamma))
        return f"ITM(r={self.r}, beta=({b}), gamma=({g}))"


@dataclass(frozen=True, order=True)
class SignedPoint:
    value: Fraction
    side: str = PLUS

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))
        if self.side not in (PLUS, MINUS):
            raise ValueError(f"side must be '+' or '-', got {self.side!r}")

    def __str__(self):
        return f"{self.value}{self.side}"

    def touches(self, other: "SignedPoint") -> bool:
        return self.value == other.value and self.side != other.side

    def mirrored(self) -> "SignedPoint":
        return SignedPoint(1 - self.value, MINUS if self.side == PLUS else PLUS)


def plus(x) -> SignedPoint:
    return SignedPoint(parse_rat(x), PLUS)


def minus(x) -> SignedPoint:
    return SignedPoint(parse_rat(x), MINUS)


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: int
    detail: str

    def __str__(self):
        return f"{self.constraint}[{self.index}]: {self.detail}"


def validate_itm(p: ParamVector) -> list[Violation]:
    """Return the list of violated constraints; empty means valid."""
    out = []
    if p.r < 2:
        out.append(Violation("r", p.r, "need at least two branches"))
    if p.beta[0] != 0:
        out.append(Violation("beta0", 0, f"beta_0 = {p.beta[0]} != 0"))
    if p.beta[-1] != 1:
        out.append(Violation("beta_r", p.r, f"beta_r = {p.beta[-1]} != 1"))
    for i in range(1, len(p.beta)):
        if not p.beta[i - 1] < p.beta[i]:
            out.append(Violation("beta_order", i,
                                 f"beta_{i - 1} = {p.beta[i - 1]} >= beta_{i} = {p.beta[i]}"))
    for i in range(1, p.r + 1):
        g, lo, hi = p.gamma[i - 1], -p.beta[i - 1], 1 - p.beta[i]
        if g < lo:
            out.append(Violation("gamma_low", i, f"gamma_{i} = {g} < -beta_{i - 1} = {lo}"))
        if g > hi:
            out.append(Violation("gamma_high", i, f"gamma_{i} = {g} > 1 - beta_{i} = {hi}"))
    return out


def is_valid(p: ParamVector) -> bool:
    return not validate_itm(p)


def require_valid(p: ParamVector) -> ParamVector:
    bad = validate_itm(p)
    if bad:
        raise InvalidMapError("; ".join(map(str, bad)))
    return p


def branch_index(p: ParamVector, x: SignedPoint) -> int:
    """1-based branch used to evaluate ``x``.

    ``x+`` uses the right-continuous branch (``beta[i-1] <= v < beta[i]``),
    ``x-`` the left-continuous one (``beta[i-1] < v <= beta[i]``).
    """
    v = x.value
    if x.side == PLUS:
        if not 0 <= v < 1:
            raise SentinelError(f"{x} is outside the domain")
        return bisect.bisect_right(p.beta, v)
    if not 0 < v <= 1:
        raise SentinelError(f"{x} is outside the domain")
    return bisect.bisect_left(p.beta, v)


def apply(p: ParamVector, x: SignedPoint) -> SignedPoint:
    return SignedPoint(x.value + p.gamma[branch_index(p, x) - 1], x.side)


def critical_index(p: ParamVector, v: Fraction) -> int | None:
    """Index ``i`` in ``1..r-1`` with ``beta[i] == v``, else None."""
    i = bisect.bisect_left(p.beta, v)
    if 0 < i < p.r and p.beta[i] == v:
        return i
    return None


def critical_points(p: ParamVector) -> list[SignedPoint]:
    """The critical set, ordered ``b1+, b1-, b2+, ...``."""
    out = []
    for i in range(1, p.r):
        out.append(SignedPoint(p.beta[i], PLUS))
        out.append(SignedPoint(p.beta[i], MINUS))
    return out


def critical_label(index: int, side: str) -> str:
    return f"b{index}{side}"


def parse_critical_label(label: str) -> tuple[int, str]:
    if len(label) < 3 or label[0] != "b" or label[-1] not in (PLUS, MINUS):
        raise ValueError(f"bad critical label {label!r}")
    return int(label[1:-1]), label[-1]


# -- interval sets -----------------------------------------------------------

Interval = tuple[Fraction, Fraction]


def _normalize(pieces: Iterable[Interval]) -> tuple[Interval, ...]:
    items = sorted((Fraction(a), Fraction(b)) for a, b in pieces if a < b)
    out: list[list[Fraction]] = []
    for a, b in items:
        if out and a <= out[-1][1]:
            if b > out[-1][1]:
                out[-1][1] = b
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


class IntervalSet:
    """Finite disjoint union of half-open intervals ``[a, b)``.

    Touching intervals are merged on construction, so two sets are equal iff
    their interval tuples are equal.
    """

    __slots__ = ("intervals",)

    def __init__(self, pieces: Iterable[Interval] = ()):
        self.intervals = _normalize(pieces)

    @classmethod
    def unit(cls) -> "IntervalSet":
        return cls([(Fraction(0), Fraction(1))])

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    def __eq__(self, other):
        return isinstance(other, IntervalSet) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __repr__(self):
        body = " U ".join(f"[{a}, {b})" for a, b in self.intervals) or "{}"
        return f"IntervalSet({body})"

    def measure(self) -> Fraction:
        return sum((b - a for a, b in self.intervals), Fraction(0))

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.intervals + other.intervals)

    __or__ = union

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        A, B = self.intervals, other.intervals
        while i < len(A) and j < len(B):
            lo = max(A[i][0], B[j][0])
            hi = min(A[i][1], B[j][1])
            if lo < hi:
                out.append((lo, hi))
            if A[i][1] < B[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet(out)

    __and__ = intersection

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a, b in self.intervals:
            cur = a
            for c, d in other.intervals:
                if d <= cur or c >= b:
                    continue
                if c > cur:
                    out.append((cur, c))
                cur = max(cur, d)
                if cur >= b:
                    break
            if cur < b:
                out.append((cur, b))
        return IntervalSet(out)

    __sub__ = difference

    def issubset(self, other: "IntervalSet") -> bool:
        return not (self - other)

    def contains(self, x: SignedPoint | Fraction) -> bool:
        """Membership; signed points follow the half-open rule for their side."""
        if isinstance(x, SignedPoint):
            return any(signed_in(x, a, b) for a, b in self.intervals)
        return any(a <= x < b for a, b in self.intervals)

    __contains__ = contains

    def component_of(self, x: SignedPoint) -> int | None:
        for k, (a, b) in enumerate(self.intervals):
            if signed_in(x, a, b):
                return k
        return None

    def endpoints(self) -> set[Fraction]:
        return {e for iv in self.intervals for e in iv}


def signed_in(x: SignedPoint, a: Fraction, b: Fraction) -> bool:
    """``x+`` in ``[a, b)`` iff ``a <= v < b``; ``x-`` iff ``a < v <= b``."""
    if x.side == PLUS:
        return a <= x.value < b
    return a < x.value <= b


def image_pieces(p: ParamVector, S: IntervalSet) -> list[Interval]:
    """Images of the pieces of ``S`` cut at the discontinuities (unmerged)."""
    out = []
    beta = p.beta
    for a, b in S:
        i = bisect.bisect_right(beta, a)
        while a < b:
            hi = min(b, beta[i])
            g = p.gamma[i - 1]
            out.append((a + g, hi + g))
            a = hi
            i += 1
    return out


def image_interval_set(p: ParamVector, S: IntervalSet) -> IntervalSet:
    return IntervalSet(image_pieces(p, S))


# -- orbits ------------------------------------------------------------------

@dataclass(frozen=True)
class Landing:
    time: int
    index: int
    side: str


@dataclass(frozen=True)
class OrbitRecord:
    start: SignedPoint
    preperiod: int
    period: int | None
    points: tuple[SignedPoint, ...]
    landings: tuple[Landing, ...]

    @property
    def periodic(self) -> bool:
        return self.period is not None

    def cycle(self) -> tuple[SignedPoint, ...]:
        if self.period is None:
            return ()
        return self.points[self.preperiod:self.preperiod + self.period]

    def hits_after_start(self) -> set[int]:
        """Discontinuity indices hit at some time ``>= 1`` along the whole orbit."""
        out = {ld.index for ld in self.landings if ld.time >= 1}
        if self.period is not None and self.preperiod == 0:
            out.update(ld.index for ld in self.landings if ld.time == 0)
        return out


def orbit_record(p: ParamVector, x: SignedPoint, budget: int) -> OrbitRecord:
    """Iterate ``x`` until a signed point repeats or ``budget`` steps pass."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    seen: dict[SignedPoint, int] = {}
    points: list[SignedPoint] = []
    landings: list[Landing] = []
    cur = x
    for t in range(budget + 1):
        if cur in seen:
            pre = seen[cur]
            return OrbitRecord(x, pre, t - pre, tuple(points), tuple(landings))
        seen[cur] = t
        points.append(cur)
        idx = critical_index(p, cur.value)
        if idx is not None:
            landings.append(Landing(t, idx, cur.side))
        if t == budget:
            break
        cur = apply(p, cur)
    return OrbitRecord(x, len(points), None, tuple(points), tuple(landings))


def orbit_budget(p: ParamVector) -> int:
    """Steps that always suffice to close a signed orbit of a rational map.

    Orbit values stay on the ``1/D`` grid of ``[0, 1]``, so at most ``D + 1``
    distinct signed points occur for a fixed side.
    """
    return p.denominator_lcm() + 2


def entry_counts_and_translation(p: ParamVector, x: SignedPoint,
                                 n: int) -> tuple[tuple[int, ...], Fraction]:
    """Branch visit counts over times ``0..n-1`` and ``Tr(x, n)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    counts = [0] * p.r
    cur = x
    for _ in range(n):
        i = branch_index(p, cur)
        counts[i - 1] += 1
        cur = SignedPoint(cur.value + p.gamma[i - 1], cur.side)
    tr = sum((c * g for c, g in zip(counts, p.gamma)), Fraction(0))
    return tuple(counts), tr


def iterate(p: ParamVector, x: SignedPoint, n: int) -> SignedPoint:
    for _ in range(n):
        x = apply(p, x)
    return x


def itinerary(p: ParamVector, x: SignedPoint, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(n):
        i = branch_index(p, x)
        out.append(i)
        x = SignedPoint(x.value + p.gamma[i - 1], x.side)
    return tuple(out)


def translation(p: ParamVector, counts: Sequence[int]) -> Fraction:
    return sum((c * g for c, g in zip(counts, p.gamma)), Fraction(0))
