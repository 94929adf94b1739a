"""Integer coefficient vectors of landings, connections and returns.

A vector ``(e | f)`` pairs with the parameters as ``sum e_s gamma_s + sum f_s beta_s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .core import (ITMError, MINUS, PLUS, ParamVector, SignedPoint, branch_index,
                   critical_points, entry_counts_and_translation, orbit_budget,
                   orbit_record)
from .critical import first_connection
from .linalg import rank
from .returnmap import ReturnMapData, classify_component
from .stability import StabilityReport


class NoLandingError(ITMError):
    pass


class NTooSmallError(ITMError):
    pass


class SumNotZeroError(ITMError):
    pass


@dataclass(frozen=True)
class CoefVector:
    e: tuple[int, ...]
    f: tuple[int, ...]

    @classmethod
    def zero(cls, r: int) -> "CoefVector":
        return cls((0,) * r, (0,) * (r - 1))

    @classmethod
    def basis_f(cls, r: int, index: int, sign: int = 1) -> "CoefVector":
        f = [0] * (r - 1)
        f[index - 1] = sign
        return cls((0,) * r, tuple(f))

    def __add__(self, other: "CoefVector") -> "CoefVector":
        return CoefVector(tuple(a + b for a, b in zip(self.e, other.e)),
                          tuple(a + b for a, b in zip(self.f, other.f)))

    def __neg__(self) -> "CoefVector":
        return CoefVector(tuple(-a for a in self.e), tuple(-a for a in self.f))

    def __sub__(self, other: "CoefVector") -> "CoefVector":
        return self + (-other)

    def scale(self, c) -> tuple[Fraction, ...]:
        return tuple(Fraction(c) * v for v in self.entries)

    @property
    def entries(self) -> tuple[int, ...]:
        return self.e + self.f

    def is_zero(self) -> bool:
        return not any(self.entries)

    def product(self, p: ParamVector) -> Fraction:
        return (sum((k * g for k, g in zip(self.e, p.gamma)), Fraction(0))
                + sum((k * b for k, b in zip(self.f, p.beta[1:-1])), Fraction(0)))

    def to_record(self) -> dict:
        return {"e": list(self.e), "f": list(self.f)}


def _with_f(e: tuple[int, ...], r: int, terms: Iterable[tuple[int, int]]) -> CoefVector:
    f = [0] * (r - 1)
    for index, sign in terms:
        f[index - 1] += sign
    return CoefVector(e, tuple(f))


def _has_chain(d: ReturnMapData, j: int, side: str) -> bool:
    return (j, side) in d.chains and d.chain(j, side).m > 0


def landing_vector(d: ReturnMapData, j: int) -> CoefVector:
    """``L_j``: counts up to the first landing of ``a_j``, minus that discontinuity."""
    if 1 <= j < d.N:
        ch = d.chain(j, PLUS)
    elif j == 0 and _has_chain(d, 0, PLUS):
        ch = d.chain(0, PLUS)
    elif j == d.N and _has_chain(d, d.N, MINUS):
        ch = d.chain(d.N, MINUS)
    else:
        raise NoLandingError(f"a_{j} does not land before returning")
    t, index = ch.hits[0]
    return _with_f(ch.counts(0, t, d.r), d.r, [(index, -1)])


def connection_vectors(d: ReturnMapData, j: int, side: str) -> list[CoefVector]:
    """``C(j, k)`` for consecutive hits ``k -> k+1`` along the chain of ``a_j``."""
    ch = d.chain(j, side)
    out = []
    for (t0, i0), (t1, i1) in zip(ch.hits, ch.hits[1:]):
        out.append(_with_f(ch.counts(t0, t1, d.r), d.r, [(i0, 1), (i1, -1)]))
    return out


def return_vector(d: ReturnMapData, j: int, side: str) -> CoefVector:
    ch = d.chain(j, side)
    if ch.m == 0:
        return CoefVector(ch.counts(0, ch.return_time, d.r), (0,) * (d.r - 1))
    t, index = ch.hits[-1]
    return _with_f(ch.counts(t, ch.return_time, d.r), d.r, [(index, 1)])


# -- bundles -------------------------------------------------------------------

@dataclass(frozen=True)
class VectorEntry:
    label: str
    vector: CoefVector
    expected: Fraction          # required value of the product with (gamma beta)


@dataclass(frozen=True)
class ComponentVectorBundle:
    data: ReturnMapData
    entries: tuple[VectorEntry, ...]

    def get(self, label: str) -> CoefVector:
        for e in self.entries:
            if e.label == label:
                return e.vector
        raise KeyError(label)

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def replace(self, label: str, vector: CoefVector) -> "ComponentVectorBundle":
        return ComponentVectorBundle(self.data, tuple(
            VectorEntry(e.label, vector, e.expected) if e.label == label else e
            for e in self.entries))

    def to_record(self) -> dict:
        return {e.label: e.vector.to_record() for e in self.entries}


def _chain_sides(d: ReturnMapData):
    """``(j, side)`` pairs carrying chains, in the order ``a0+, a1+, a1-, ..., aN-``."""
    yield 0, PLUS
    for j in range(1, d.N):
        yield j, PLUS
        yield j, MINUS
    yield d.N, MINUS


def build_bundle(d: ReturnMapData) -> ComponentVectorBundle:
    entries = []
    for j in range(0, d.N + 1):
        if 1 <= j < d.N or (j == 0 and _has_chain(d, 0, PLUS)) or (j == d.N and _has_chain(d, d.N, MINUS)):
            entries.append(VectorEntry(f"L{j}", landing_vector(d, j), -d.a[j]))
    for j, side in _chain_sides(d):
        for k, c in enumerate(connection_vectors(d, j, side), start=1):
            entries.append(VectorEntry(f"C{side}({j},{k})", c, Fraction(0)))
    for j, side in _chain_sides(d):
        ch = d.chain(j, side)
        back = ch.returned.value
        expected = back if ch.m else back - d.a[j]
        entries.append(VectorEntry(f"R{j}{side}", return_vector(d, j, side), expected))
    return ComponentVectorBundle(d, tuple(entries))


@dataclass(frozen=True)
class IdentityVerdict:
    passed: bool
    failures: tuple[str, ...]


def verify_identities(p: ParamVector, bundle: ComponentVectorBundle) -> IdentityVerdict:
    bad = []
    for e in bundle.entries:
        got = e.vector.product(p)
        if got != e.expected:
            bad.append(f"{e.label}: product {got}, expected {e.expected}")
    return IdentityVerdict(not bad, tuple(bad))


# -- linear dependences among bundle vectors -------------------------------------

def _alpha(coeffs: dict, label: str) -> Fraction:
    return Fraction(coeffs.get(label, 0))


def lin_dep_coefficient_check(bundle: ComponentVectorBundle, coefficients: dict) -> IdentityVerdict:
    """Check the equalities forced on the coefficients of a dependence.

    For ``0 <= j < N`` the coefficients of ``C+(j, .)``, ``R_j+`` and the negated
    coefficients of ``C-(j+1, .)``, ``R_{j+1}-`` all agree; and
    ``alpha_j = alpha-(j,1) + alpha+(j,1)``.
    """
    d = bundle.data
    unknown = set(coefficients) - set(bundle.labels())
    if unknown:
        raise KeyError(f"unknown labels {sorted(unknown)}")
    total = [Fraction(0)] * (2 * d.r - 1)
    for e in bundle.entries:
        c = _alpha(coefficients, e.label)
        if c:
            total = [t + v for t, v in zip(total, e.vector.scale(c))]
    if any(total):
        raise SumNotZeroError("the weighted sum of bundle vectors is not zero")
    bad = []
    for j in range(d.N):
        plus = [_alpha(coefficients, f"C+({j},{k})") for k in range(1, d.chain(j, PLUS).m)]
        minus = [_alpha(coefficients, f"C-({j + 1},{k})") for k in range(1, d.chain(j + 1, MINUS).m)]
        chain = plus + [_alpha(coefficients, f"R{j}+")]
        chain += [-a for a in minus] + [-_alpha(coefficients, f"R{j + 1}-")]
        if len(set(chain)) > 1:
            bad.append(f"chain {j}: {[str(a) for a in chain]}")
    for j in range(1, d.N):
        first = {}
        for side in (PLUS, MINUS):
            label = f"C{side}({j},1)" if d.chain(j, side).m > 1 else f"R{j}{side}"
            first[side] = _alpha(coefficients, label)
        if _alpha(coefficients, f"L{j}") != first[PLUS] + first[MINUS]:
            bad.append(f"L{j}: {_alpha(coefficients, f'L{j}')} != {first[MINUS]} + {first[PLUS]}")
    return IdentityVerdict(not bad, tuple(bad))


# -- independent relations ------------------------------------------------------

def _r(d: ReturnMapData, j: int, side: str) -> CoefVector:
    return return_vector(d, j, side)


def independence_witnesses(p: ParamVector, d: ReturnMapData) -> tuple[list[CoefVector], int]:
    """Integer relations ``<v, (gamma beta)> = 0`` from adjacent branch images.

    Row ``k`` equates the right end of the ``k``-th image with the left end of
    the ``(k+1)``-th. A boundary point that never lands has a return vector
    relative to itself, so its row gets the return vector of the branch that
    maps onto it added; the row containing ``a0+`` is then dropped.
    """
    N = d.N
    if N < 3:
        raise NTooSmallError(f"N={N} < 3")
    tau = d.tau
    land0 = d.boundary_lands(PLUS)
    landN = d.boundary_lands(MINUS)
    rows: dict[int, CoefVector] = {}
    for k in range(1, N):
        left = tau[k - 1]
        right = tau[k] - 1
        v = _r(d, left, MINUS) - _r(d, right, PLUS)
        if right == 0 and not land0:
            v = v - _r(d, tau[0] - 1, PLUS)
        if left == N and not landN:
            v = v + _r(d, tau[N - 1], MINUS)
        rows[k] = v
    drop = None
    if not land0 and d.sig(1) > 1:
        drop = d.sig(1) - 1
    elif not landN and d.sig(N) < N:
        drop = d.sig(N)
    vecs = [v for k, v in sorted(rows.items()) if k != drop]
    return vecs, rank([v.entries for v in vecs])


# -- measure-zero witnesses -----------------------------------------------------

def connection_vector(p: ParamVector, source: SignedPoint, target: int, time: int) -> CoefVector:
    """Vector of ``T^time(source) = beta_target`` with ``source`` a discontinuity."""
    counts, _ = entry_counts_and_translation(p, source, time)
    src = p.beta.index(source.value)
    return _with_f(counts, p.r, [(src, 1), (target, -1)])


def periodic_witness(p: ParamVector, x: SignedPoint, budget: int | None = None) -> CoefVector:
    rec = orbit_record(p, x, budget or orbit_budget(p))
    if not rec.periodic or rec.preperiod != 0:
        raise ITMError(f"{x} is not periodic")
    counts = [0] * p.r
    for y in rec.points[:rec.period]:
        counts[branch_index(p, y) - 1] += 1
    return CoefVector(tuple(counts), (0,) * (p.r - 1))


def measure_zero_witness(p: ParamVector, report: StabilityReport,
                         periodic_point: SignedPoint | None = None) -> CoefVector | None:
    if not report.finite_type:
        return None
    acc_ok = report.a1.passed and report.a2.passed and report.a3.passed
    if not acc_ok:
        budget = orbit_budget(p)
        for c in critical_points(p):
            conn = first_connection(p, c, budget)
            if conn is not None and p.beta[conn.target] != c.value:
                return connection_vector(p, c, conn.target, conn.time)
    if not report.matching.passed:
        for d in report.maps:
            if classify_component(d) != "dynamically_trivial" and d.N >= 3:
                vecs, _ = independence_witnesses(p, d)
                nonzero = [v for v in vecs if not v.is_zero()]
                if nonzero:
                    return nonzero[0]
    if periodic_point is not None:
        return periodic_witness(p, periodic_point)
    return None
