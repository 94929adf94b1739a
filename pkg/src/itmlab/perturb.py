"""Small rational perturbations that drive an eventually periodic map to a stable one."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .attractor import components_and_boundary, compute_attractor
from .core import (ITMError, IntervalSet, MINUS, PLUS, ParamVector, SignedPoint, branch_index,
                   critical_label, critical_points, image_interval_set, is_valid, orbit_budget,
                   orbit_record, require_valid)
from .critical import (Connection, OrbitHits, correspondence_report, first_connection,
                       has_correspondence, maximal_periodic_interval, unstable_number)
from .linalg import solve_least_norm
from .mapfile import map_to_record
from .returnmap import ReturnMapData, orbit_pieces, return_maps
from .stability import stability_report
from .vectors import CoefVector, landing_vector, return_vector

SUCCESS = "success"
INFEASIBLE = "infeasible"
VERIFICATION_FAILED = "verification-failed"


class NoOffenderError(ITMError):
    pass


def rationalize(p: ParamVector, max_denominator: int) -> ParamVector:
    """Nearby valid map whose parameters have denominators at most ``max_denominator``."""
    require_valid(p)
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    step = Fraction(1, max_denominator)
    beta = [Fraction(0)]
    for b in p.beta[1:-1]:
        nb = b.limit_denominator(max_denominator)
        if nb <= beta[-1]:
            nb = beta[-1] + step
        beta.append(nb)
    beta.append(Fraction(1))
    if beta[-2] >= 1:
        raise ValueError(f"cannot place {p.r - 1} discontinuities on the 1/{max_denominator} grid")
    gamma = []
    for i, g in enumerate(p.gamma, start=1):
        ng = g.limit_denominator(max_denominator)
        gamma.append(min(max(ng, -beta[i - 1]), 1 - beta[i]))
    return require_valid(ParamVector(tuple(beta), tuple(gamma)))


# -- requests ------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionDirective:
    """Require ``T~^time(source~) - beta~_target == offset`` along the old itinerary."""

    source: SignedPoint
    target: int
    time: int
    offset: Fraction = Fraction(0)

    @property
    def part(self) -> str:
        return "offset" if self.offset else "preserve"


@dataclass(frozen=True)
class DeltaRequest:
    component: ReturnMapData | None = None
    branch_deltas: dict = field(default_factory=dict)     # j -> change of Tr(J_j)
    point_shifts: dict = field(default_factory=dict)      # j -> change of a_j
    connections: tuple[ConnectionDirective, ...] = ()

    def is_zero(self) -> bool:
        return (not any(self.branch_deltas.values()) and not any(self.point_shifts.values())
                and not any(c.offset for c in self.connections))


@dataclass
class PerturbationOutcome:
    source: ParamVector
    result: ParamVector
    status: str
    realized: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    method: str = ""
    eps: Fraction | None = None
    detail: str = ""
    trail: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS

    def to_record(self) -> dict:
        return {
            "status": self.status,
            "method": self.method,
            "eps": None if self.eps is None else str(self.eps),
            "before": {"beta": [str(b) for b in self.source.beta],
                       "gamma": [str(g) for g in self.source.gamma]},
            "after": {"beta": [str(b) for b in self.result.beta],
                      "gamma": [str(g) for g in self.result.gamma]},
            "distance": str(self.result.distance(self.source)),
            "realized": {k: str(v) for k, v in self.realized.items()},
            "verification": dict(self.verification),
            "detail": self.detail,
            "trail": list(self.trail),
        }


def _counts(p: ParamVector, x: SignedPoint, n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Itinerary and branch counts of ``x`` over ``n`` steps."""
    itin, counts, cur = [], [0] * p.r, x
    for _ in range(n):
        i = branch_index(p, cur)
        itin.append(i)
        counts[i - 1] += 1
        cur = SignedPoint(cur.value + p.gamma[i - 1], cur.side)
    return tuple(itin), tuple(counts)


def _run(p: ParamVector, x: SignedPoint, n: int) -> tuple[tuple[int, ...], SignedPoint]:
    itin, cur = [], x
    for _ in range(n):
        i = branch_index(p, cur)
        itin.append(i)
        cur = SignedPoint(cur.value + p.gamma[i - 1], cur.side)
    return tuple(itin), cur


def _f(r: int, terms: Iterable[tuple[int, int]]) -> tuple[int, ...]:
    f = [0] * (r - 1)
    for i, s in terms:
        f[i - 1] += s
    return tuple(f)


def connection_row(p: ParamVector, c: ConnectionDirective) -> CoefVector:
    _, counts = _counts(p, c.source, c.time)
    src = p.beta.index(c.source.value)
    return CoefVector(counts, _f(p.r, [(src, 1), (c.target, -1)]))


def endpoint_row(p: ParamVector, d: ReturnMapData, j: int) -> CoefVector:
    """Row ``v`` with ``a_j = const + <v, (gamma beta)>`` along the current combinatorics."""
    N = d.N
    if 1 <= j < N or (j == 0 and d.boundary_lands(PLUS)) or (j == N and d.boundary_lands(MINUS)):
        return -landing_vector(d, j)
    tau = d.tau
    if j == 0 and tau[0] != 1:
        return return_vector(d, tau[0] - 1, PLUS)
    if j == N and tau[-1] != N:
        return return_vector(d, tau[-1], MINUS)
    return _provenance_row(p, SignedPoint(d.a[j], PLUS if j == 0 else MINUS))


def _provenance_row(p: ParamVector, x: SignedPoint) -> CoefVector:
    """Express ``x`` as the earliest image of ``0+``, ``1-`` or a discontinuity."""
    budget = orbit_budget(p)
    sources = [(SignedPoint(Fraction(0), PLUS), None), (SignedPoint(Fraction(1), MINUS), None)]
    sources += [(SignedPoint(p.beta[i], s), i) for i in range(1, p.r) for s in (PLUS, MINUS)]
    best = None
    for src, idx in sources:
        if src.side != x.side:
            continue
        rec = orbit_record(p, src, budget)
        for t, y in enumerate(rec.points):
            if y == x:
                if best is None or t < best[0]:
                    best = (t, src, idx)
                break
    if best is None:
        raise ITMError(f"{x} is not an image of a boundary or critical point")
    t, src, idx = best
    _, counts = _counts(p, src, t)
    return CoefVector(counts, _f(p.r, [(idx, 1)] if idx else []))


def _directive_label(p: ParamVector, c: ConnectionDirective) -> str:
    src = critical_label(p.beta.index(c.source.value), c.source.side)
    return f"{src}->b{c.target}@{c.time}"


def _apply(p: ParamVector, x: list[Fraction]) -> ParamVector:
    return ParamVector.from_vector([a + b for a, b in zip(p.as_vector(), x)], p.r)


def tight_rows(p: ParamVector) -> list[tuple[int, ...]]:
    """Rows fixing ``beta_{i-1} + gamma_i`` when it is 0 and ``beta_i + gamma_i`` when it is 1."""
    r = p.r
    out = []
    for i in range(1, r + 1):
        for k, bound in ((i - 1, 0), (i, 1)):
            if p.beta[k] + p.gamma[i - 1] == bound:
                row = [0] * (2 * r - 1)
                row[i - 1] = 1
                if 1 <= k <= r - 1:
                    row[r + k - 1] = 1
                out.append(tuple(row))
    return out


def realize_deltas(p: ParamVector, req: DeltaRequest,
                   bound: Fraction | None = None) -> PerturbationOutcome:
    """Solve for ``(dgamma, dbeta)`` realizing ``req`` and re-simulate every claim.

    Each requested quantity is linear in the parameters as long as the
    itineraries involved do not change, so the request is one exact linear
    system; its minimum-norm solution is applied and then checked.
    """
    d = req.component
    rows: list[CoefVector] = []
    rhs: list[Fraction] = []
    labels: list[str] = []
    zero_f = (0,) * (p.r - 1)
    if d is not None:
        for j, delta in sorted(req.branch_deltas.items()):
            rows.append(CoefVector(d.branch(j).counts, zero_f))
            rhs.append(Fraction(delta))
            labels.append(f"Tr(J{j})")
        for j, delta in sorted(req.point_shifts.items()):
            rows.append(endpoint_row(p, d, j))
            rhs.append(Fraction(delta))
            labels.append(f"a{j}")
    for c in req.connections:
        rows.append(connection_row(p, c))
        rhs.append(Fraction(c.offset))
        labels.append(_directive_label(p, c))
    A = [v.entries for v in rows]
    x = solve_least_norm(A, rhs) if rows else [Fraction(0)] * (2 * p.r - 1)
    if x is None:
        return PerturbationOutcome(p, p, INFEASIBLE, detail="inconsistent linear system")
    q = _apply(p, x)
    if not is_valid(q):
        # Keep every image endpoint that touches 0 or 1 where it is.
        tight = tight_rows(p)
        x = solve_least_norm(A + tight, rhs + [Fraction(0)] * len(tight))
        if x is None:
            return PerturbationOutcome(p, p, INFEASIBLE, detail="inconsistent with the domain boundary")
        q = _apply(p, x)
        if not is_valid(q):
            return PerturbationOutcome(p, p, INFEASIBLE, detail="perturbed parameters are not a valid map")
    size = max((abs(v) for v in x), default=Fraction(0))
    if bound is not None and size > bound:
        return PerturbationOutcome(p, p, INFEASIBLE, detail=f"solution size {size} exceeds {bound}")
    realized = {lab: rv for lab, rv in zip(labels, rhs)}
    realized["|delta|"] = size
    failures = _verify_request(p, q, req)
    status = VERIFICATION_FAILED if failures else SUCCESS
    return PerturbationOutcome(p, q, status, realized, {"request": not failures},
                               detail="; ".join(failures))


def _verify_request(p: ParamVector, q: ParamVector, req: DeltaRequest) -> list[str]:
    bad = []
    for c in req.connections:
        old_itin, _ = _run(p, c.source, c.time)
        src = SignedPoint(q.beta[p.beta.index(c.source.value)], c.source.side)
        new_itin, end = _run(q, src, c.time)
        if new_itin != old_itin:
            bad.append(f"{_directive_label(p, c)}: itinerary changed")
        elif end.value - q.beta[c.target] != c.offset:
            bad.append(f"{_directive_label(p, c)}: offset {end.value - q.beta[c.target]}")
    d = req.component
    if d is None:
        return bad
    delta = [b - a for a, b in zip(p.as_vector(), q.as_vector())]
    new_a = [d.a[j] + sum(Fraction(v) * w for v, w in zip(endpoint_row(p, d, j).entries, delta))
             for j in range(d.N + 1)]
    for j, shift in req.point_shifts.items():
        if new_a[j] - d.a[j] != shift:
            bad.append(f"a{j}: moved by {new_a[j] - d.a[j]}")
    for j in range(1, d.N + 1):
        b = d.branch(j)
        lo, hi = new_a[j - 1], new_a[j]
        if not lo < hi:
            bad.append(f"J{j}: collapsed")
            continue
        want = b.translation + Fraction(req.branch_deltas.get(j, 0))
        old_itin, _ = _run(p, SignedPoint(b.lo, PLUS), b.return_time)
        for x in (SignedPoint(lo, PLUS), SignedPoint(hi, MINUS)):
            try:
                itin, end = _run(q, x, b.return_time)
            except ITMError:
                bad.append(f"J{j}: left the domain")
                break
            if itin != old_itin:
                bad.append(f"J{j}: itinerary changed")
                break
            if j in req.branch_deltas and end.value - x.value != want:
                bad.append(f"J{j}: translation {end.value - x.value}, wanted {want}")
                break
    return bad


# -- connection bookkeeping -------------------------------------------------------

def critical_connections(p: ParamVector, budget: int | None = None) -> list[Connection]:
    """First landing (time >= 1) of each signed critical point, where it exists."""
    budget = budget or orbit_budget(p)
    out = []
    for c in critical_points(p):
        conn = first_connection(p, c, budget)
        if conn is not None:
            out.append(conn)
    return out


def _as_directive(c: Connection, offset=Fraction(0)) -> ConnectionDirective:
    return ConnectionDirective(c.source, c.target, c.time, Fraction(offset))


def chain_links(p: ParamVector, d: ReturnMapData) -> list[ConnectionDirective]:
    """Connections between consecutive hits inside one return of a landing chain."""
    out = []
    for (_, side), ch in sorted(d.chains.items()):
        for (t0, i0), (t1, i1) in zip(ch.hits, ch.hits[1:]):
            out.append(ConnectionDirective(SignedPoint(p.beta[i0], side), i1, t1 - t0))
    return _dedupe(out)


def _dedupe(items: list[ConnectionDirective]) -> list[ConnectionDirective]:
    seen, out = set(), []
    for c in items:
        key = (c.source, c.target, c.time)
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def outside_connections(p: ParamVector, region: IntervalSet,
                        conns: list[Connection]) -> list[ConnectionDirective]:
    """Connections whose source and target both avoid ``region``; kept fixed."""
    out = []
    for c in conns:
        target = SignedPoint(p.beta[c.target], c.source.side)
        if not region.contains(c.source) and not region.contains(target):
            out.append(_as_directive(c))
    return out


def component_orbit(p: ParamVector, d: ReturnMapData) -> IntervalSet:
    return IntervalSet(iv for _, _, iv in orbit_pieces(p, d))


def periodic_orbit_set(p: ParamVector, P: tuple[Fraction, Fraction], b: SignedPoint,
                       period: int) -> IntervalSet:
    lo, hi = P
    pieces, cur = [], b
    for _ in range(period):
        shift = cur.value - b.value
        pieces.append((lo + shift, hi + shift))
        cur = SignedPoint(cur.value + p.gamma[branch_index(p, cur) - 1], cur.side)
    return IntervalSet(pieces)


def _replace(links: list[ConnectionDirective], new: ConnectionDirective) -> list[ConnectionDirective]:
    key = (new.source, new.target, new.time)
    return [new] + [c for c in links if (c.source, c.target, c.time) != key]


# -- analysis and stage checks --------------------------------------------------

@dataclass
class Analysis:
    p: ParamVector
    finite_type: bool
    X: IntervalSet | None = None
    maps: list = field(default_factory=list)
    hits: OrbitHits | None = None
    U: int | None = None
    correspondence: dict = field(default_factory=dict)
    eventually_periodic: bool = False

    @property
    def has_correspondence(self) -> bool:
        return has_correspondence(self.correspondence)

    def offenders(self) -> list[SignedPoint]:
        """Signed critical points of X whose orbit meets another discontinuity."""
        out = []
        for c in critical_points(self.p):
            if self.X.contains(c):
                own = self.p.beta.index(c.value)
                if self.hits.hits(c) - {own}:
                    out.append(c)
        return out


CANDIDATE_ATTRACTOR_CAP = 4000
CANDIDATE_COMPONENT_CAP = 64


def _capped_attractor(p: ParamVector, steps: int, max_components: int) -> IntervalSet | None:
    cur = IntervalSet.unit()
    for _ in range(steps):
        nxt = image_interval_set(p, cur)
        if nxt == cur:
            return cur
        if len(nxt) > max_components:
            return None
        cur = nxt
    return None


def analyze(p: ParamVector, cap: int | None = None) -> Analysis:
    """Attractor, return maps, hits, U and correspondence of ``p``.

    With ``cap`` the attractor gets at most that many images and
    ``CANDIDATE_COMPONENT_CAP`` components; a map exceeding either is reported
    as not finite type, which only ever rejects a candidate.
    """
    if cap is None:
        att = compute_attractor(p)
        if not att.finite_type:
            return Analysis(p, False)
        X = att.X
    else:
        X = _capped_attractor(p, min(cap, p.denominator_lcm() + 1), CANDIDATE_COMPONENT_CAP)
        if X is None:
            return Analysis(p, False)
    maps = return_maps(p, X)
    hits = OrbitHits(p, X, maps)
    budget = orbit_budget(p)
    ep = all(orbit_record(p, c, budget).periodic for c in critical_points(p))
    return Analysis(p, True, X, maps, hits, unstable_number(p, X, hits),
                    correspondence_report(p, X), ep)


def _base_flags(a: Analysis) -> dict:
    return {"finite_type": a.finite_type, "eventually_periodic": a.eventually_periodic}


# -- case constructions ----------------------------------------------------------

def case_ratio(a: int, b: int) -> Fraction:
    """A ratio ``eps2/eps1`` with ``a/(b+1) < ratio < (a+1)/b`` (``> a`` when ``b = 0``)."""
    if b < 0 or a < 0:
        raise ValueError("visit counts must be non-negative")
    if b == 0:
        return Fraction(a + 1)
    return (Fraction(a, b + 1) + Fraction(a + 1, b)) / 2


def case_epsilons(a: int, b: int, eps: Fraction) -> tuple[Fraction, Fraction]:
    ratio = case_ratio(a, b)
    e1 = eps / max(Fraction(1), ratio)
    e2 = ratio * e1
    assert -e2 < -a * e1 + b * e2 < e1
    return e1, e2


def _visits(d: ReturnMapData, start: SignedPoint, stop: Callable[[SignedPoint], bool],
            limit: int) -> tuple[int, list[int]] | None:
    """R_J-steps from ``start`` until ``stop`` holds, with the branches visited."""
    cur, seen = start, []
    for t in range(limit + 1):
        if stop(cur):
            return t, seen
        j = d.locate(cur)
        seen.append(j)
        cur = d.R(cur)
    return None


def _fixed_points(d: ReturnMapData) -> dict:
    return {j: Fraction(0) for j in range(d.N + 1)}


def _context(a: Analysis, d: ReturnMapData) -> tuple[list, list]:
    """(a) links in the orbit of J and (b) connections kept outside it."""
    p = a.p
    links = chain_links(p, d)
    region = component_orbit(p, d)
    outside = outside_connections(p, region, critical_connections(p))
    return links, outside


def _request(d, deltas, links, outside, points=True) -> DeltaRequest:
    return DeltaRequest(d, deltas, _fixed_points(d) if points else {}, tuple(_dedupe(links + outside)))


def case_one(a: Analysis, d: ReturnMapData, eps: Fraction) -> list[tuple[str, DeltaRequest]]:
    """N > 3: open a gap at the second critical value of R_J."""
    tau = d.tau
    v2 = d.critical_values()[1]
    interior = set(d.a[1:-1])
    found = _visits(d, SignedPoint(v2, PLUS), lambda x: x.value in interior, 4 * len(a.p.beta) * 10 ** 4)
    if found is None:
        return []
    P, seen = found
    na = sum(1 for j in seen if j == tau[1])
    nb = sum(1 for j in seen if j == tau[2])
    e1, e2 = case_epsilons(na, nb, eps)
    links, outside = _context(a, d)
    deltas = {j: Fraction(0) for j in range(1, d.N + 1)}
    deltas[tau[1]], deltas[tau[2]] = -e1, e2
    return [("case-1", _request(d, deltas, links, outside)),
            ("case-1-free-ends", _request(d, deltas, links, outside, points=False))]


def case_two(a: Analysis, d: ReturnMapData, beta: SignedPoint,
             eps: Fraction) -> list[tuple[str, DeltaRequest]]:
    """N = 3: a boundary gap feeds one side of the gap at a critical value."""
    tau, sigma = d.tau, d.sigma
    v1, v2 = d.critical_values()
    options = []
    if sigma[2] == 1:       # R(y-) = v1: shift J_tau(3) left, J_tau(2) right
        options.append((v1, tau[2], tau[1]))
    if sigma[0] == 3:       # R(x+) = v2: shift J_tau(2) left, J_tau(1) right
        options.append((v2, tau[1], tau[0]))
    scored = []
    for v, minus_j, plus_j in options:
        found = _visits(d, SignedPoint(v, PLUS), lambda x: x.value == beta.value, 10 ** 5)
        if found is not None:
            scored.append((found[0], v, minus_j, plus_j, found[1]))
    scored.sort(key=lambda s: s[0])
    links, outside = _context(a, d)
    out = []
    for P, v, minus_j, plus_j, seen in scored:
        na = sum(1 for j in seen if j == minus_j)
        nb = sum(1 for j in seen if j == plus_j)
        e1, e2 = case_epsilons(na, nb, eps)
        deltas = {j: Fraction(0) for j in range(1, 4)}
        deltas[minus_j], deltas[plus_j] = -e1, e2
        out.append((f"case-2@{v}", _request(d, deltas, links, outside)))
    return out


def _offset_variants(links: list[ConnectionDirective], eps: Fraction,
                     sources: list[ConnectionDirective]) -> list[tuple[str, list]]:
    out = []
    for c in sources:
        for sign in (1, -1):
            if c.source.side == MINUS:
                sign = -sign
            new = ConnectionDirective(c.source, c.target, c.time, sign * eps)
            out.append((f"{'+' if sign > 0 else '-'}{c.source}->b{c.target}", _replace(links, new)))
    return out


def case_three(a: Analysis, d: ReturnMapData, eps: Fraction) -> list[tuple[str, DeltaRequest]]:
    """N = 2: shrink both ends of J out of the image and detach one chain link."""
    links, outside = _context(a, d)
    deltas = {1: -eps, 2: eps}
    firsts = []
    for side in (PLUS, MINUS):
        ch = d.chain(1, side)
        if ch.m >= 2:
            (t0, i0), (t1, i1) = ch.hits[0], ch.hits[1]
            firsts.append(ConnectionDirective(SignedPoint(a.p.beta[i0], side), i1, t1 - t0))
    out = []
    for name, ls in _offset_variants(links, eps, firsts):
        out.append((f"case-3{name}", _request(d, deltas, ls, outside)))
    return out


def case_four(a: Analysis, d: ReturnMapData, beta: SignedPoint,
              eps: Fraction) -> list[tuple[str, DeltaRequest]]:
    """N = 1 with ``beta+`` at the left end: pull its return left, detach its first link."""
    links, outside = _context(a, d)
    ch = d.chain(0, PLUS)
    out = []
    if ch.m >= 2:
        (t0, i0), (t1, i1) = ch.hits[0], ch.hits[1]
        first = ConnectionDirective(SignedPoint(a.p.beta[i0], PLUS), i1, t1 - t0)
        for name, ls in _offset_variants(links, eps, [first]):
            out.append((f"case-4{name}", _request(d, {1: -eps}, ls, outside)))
    return out


def boundary_case(a: Analysis, d: ReturnMapData, beta: SignedPoint,
                  eps: Fraction) -> list[tuple[str, DeltaRequest]]:
    """``beta+`` is the left end of ``J = P(beta+)``: pull its return left by eps.

    The opposite side ``beta-`` enters X afterwards; when its orbit meets other
    discontinuities those landings are detached too, so it ends up alone in
    its cycle.
    """
    p = a.p
    links, outside = _context(a, d)
    deltas = {j: Fraction(0) for j in range(1, d.N + 1)}
    deltas[1] = -eps
    out = [("boundary", _request(d, deltas, links, outside))]
    other = SignedPoint(beta.value, MINUS)
    own = p.beta.index(beta.value)
    conn = first_connection(p, other, orbit_budget(p))
    if conn is not None and conn.target != own:
        base = _dedupe(links + outside)
        for name, ls in _offset_variants(base, eps, [_as_directive(conn)]):
            out.append((f"boundary{name}", DeltaRequest(d, deltas, _fixed_points(d), tuple(ls))))
    return out


# -- stage runner -------------------------------------------------------------------

RETRIES = 6

Builder = Callable[[Analysis, Fraction], list[tuple[str, DeltaRequest]]]
Accept = Callable[[Analysis], str | None]


def _mirror_outcome(out: PerturbationOutcome, source: ParamVector) -> PerturbationOutcome:
    out.source = source
    out.result = out.result.mirrored()
    out.method = f"mirrored {out.method}" if out.method else "mirrored"
    return out


def _coordinate_moves(p: ParamVector, e: Fraction, width: int):
    """Valid maps moved by ``+-e`` in exactly ``width`` parameter coordinates."""
    base = p.as_vector()
    for ks in itertools.combinations(range(len(base)), width):
        for signs in itertools.product((-1, 1), repeat=width):
            vec = list(base)
            for k, sign in zip(ks, signs):
                vec[k] += sign * e
            q = ParamVector.from_vector(vec, p.r)
            if is_valid(q):
                moves = ",".join(f"{k}{'+' if sg > 0 else '-'}" for k, sg in zip(ks, signs))
                yield f"coordinates {moves} by {e}", q


def run_stage(p: ParamVector, name: str, builder: Builder, accept: Accept,
              eps: Fraction, retries: int = RETRIES) -> PerturbationOutcome:
    """Try the structured requests for ``eps, eps/2, ...``, then one- and two-coordinate moves.

    Every candidate is re-analyzed from scratch and must pass ``accept``;
    ``verification["structured_feasible"]`` records whether every linear solve
    was consistent.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = analyze(p)
    feasible, notes = True, []
    for k in range(retries):
        e = eps / 2 ** k
        for label, req in builder(a, e):
            out = realize_deltas(p, req, bound=eps)
            if out.status == INFEASIBLE:
                if "inconsistent" in out.detail:
                    feasible = False
                notes.append(f"{label}@{e}: {out.detail}")
                continue
            if not out.ok:
                notes.append(f"{label}@{e}: {out.detail}")
                continue
            reason = accept(analyze(out.result, CANDIDATE_ATTRACTOR_CAP))
            if reason is None:
                out.method, out.eps = f"{name}:{label}", e
                out.verification.update({"stage": True, "structured_feasible": feasible})
                return out
            notes.append(f"{label}@{e}: {reason}")
    for width, k in itertools.product((1, 2), range(retries)):
        e = eps / 2 ** k
        for label, q in _coordinate_moves(p, e, width):
            if accept(analyze(q, CANDIDATE_ATTRACTOR_CAP)) is None:
                realized = {"|delta|": q.distance(p)}
                return PerturbationOutcome(p, q, SUCCESS, realized,
                                           {"stage": True, "structured_feasible": feasible},
                                           f"{name}:fallback {label}", e, "; ".join(notes[-5:]))
    return PerturbationOutcome(p, p, INFEASIBLE, {}, {"stage": False, "structured_feasible": feasible},
                               name, eps, "; ".join(notes[-5:]))


# -- stages -------------------------------------------------------------------------

def _require_periodic(a: Analysis, stage: str) -> None:
    if not a.finite_type or not a.eventually_periodic:
        raise ITMError(f"{stage} needs a finite-type, eventually periodic map")


def _failing(a: Analysis) -> tuple[int, str] | None:
    for i, e in sorted(a.correspondence.items()):
        if e.verdict == "fails":
            return i, e.failing_side
    return None


def _orbit_links(p: ParamVector, b: SignedPoint, period: int) -> list[ConnectionDirective]:
    """Consecutive landings of ``b`` before it returns to itself."""
    rec = orbit_record(p, b, orbit_budget(p))
    hits = [(ld.time, ld.index) for ld in rec.landings if ld.time < period]
    return [ConnectionDirective(SignedPoint(p.beta[i0], b.side), i1, t1 - t0)
            for (t0, i0), (t1, i1) in zip(hits, hits[1:])]


def _correspondence_step(p: ParamVector, index: int, eps: Fraction) -> PerturbationOutcome:
    """Detach ``beta_index+`` from its own periodic orbit by ``-eps``."""
    b = SignedPoint(p.beta[index], PLUS)
    rec = orbit_record(p, b, orbit_budget(p))
    period = rec.period
    P = maximal_periodic_interval(p, b, period)
    U0 = analyze(p).U

    def build(a: Analysis, e: Fraction):
        links = _orbit_links(p, b, period)
        region = periodic_orbit_set(p, P, b, period)
        outside = outside_connections(p, region, critical_connections(p))
        close = ConnectionDirective(b, index, period, -e)
        reqs = [("detach", DeltaRequest(None, {}, {}, tuple(_dedupe([close] + links + outside)))),
                ("detach-orbit", DeltaRequest(None, {}, {}, tuple(_dedupe([close] + links))))]
        return reqs

    def accept(a: Analysis) -> str | None:
        if not a.finite_type or not a.eventually_periodic:
            return "not eventually periodic"
        if a.U > U0:
            return f"U rose to {a.U}"
        if a.correspondence.get(index) and a.correspondence[index].verdict == "fails":
            return "still failing"
        return None

    return run_stage(p, "correspondence", build, accept, eps)


def perturb_to_correspondence(p: ParamVector, eps, max_iterations: int = 8) -> PerturbationOutcome:
    """Detach failing periodic discontinuities until the correspondence holds everywhere."""
    eps = Fraction(eps)
    source, cur, trail, feasible = p, p, [], True
    for it in range(max_iterations + 1):
        a = analyze(cur)
        _require_periodic(a, "perturb_to_correspondence")
        bad = _failing(a)
        if bad is None:
            out = PerturbationOutcome(source, cur, SUCCESS, {"|delta|": cur.distance(source)},
                                      {"correspondence": True, "structured_feasible": feasible},
                                      "correspondence" if trail else "unchanged", eps, trail=trail)
            return out
        if it == max_iterations:
            break
        i, side = bad
        step_eps = eps / 2 ** (it + 1)
        if side == MINUS:
            m = cur.mirrored()
            out = _correspondence_step(m, m.r - i, step_eps)
            if out.ok:
                out = _mirror_outcome(out, cur)
        else:
            out = _correspondence_step(cur, i, step_eps)
        feasible &= out.verification.get("structured_feasible", True)
        trail.append({"beta": i, "side": side, "method": out.method, "status": out.status,
                      "eps": str(step_eps)})
        if not out.ok:
            return PerturbationOutcome(source, cur, out.status, {}, {"structured_feasible": feasible},
                                       "correspondence", eps, out.detail, trail)
        cur = out.result
    return PerturbationOutcome(source, cur, INFEASIBLE, {}, {"structured_feasible": feasible},
                               "correspondence", eps, "max iterations reached", trail)


def select_offender(a: Analysis) -> SignedPoint:
    """Offender in the component of maximal N; leftmost index, then ``+`` before ``-``."""
    cands = a.offenders()
    if cands:
        best_n = max(a.maps[a.X.component_of(c)].N for c in cands)
        cands = [c for c in cands if a.maps[a.X.component_of(c)].N == best_n]
    else:
        boundary = components_and_boundary(a.p, a.X).boundary_criticals
        cands = [SignedPoint(a.p.beta[i], s) for i in sorted(boundary) for s in (PLUS, MINUS)
                 if a.X.contains(SignedPoint(a.p.beta[i], s))]
    if not cands:
        raise NoOffenderError("no critical point to detach")
    return min(cands, key=lambda c: (c.value, c.side != PLUS))


def _reduce_candidates(beta: SignedPoint):
    def build(a: Analysis, e: Fraction):
        d = a.maps[a.X.component_of(beta)]
        out = []
        if d.N >= 4:
            out += case_one(a, d, e)
        elif d.N == 3:
            out += case_two(a, d, beta, e)
        elif d.N == 2:
            out += case_three(a, d, e)
        elif d.N == 1:
            out += case_four(a, d, beta, e)
        if beta.value == d.a[0]:
            out += boundary_case(a, d, beta, e)
        return out
    return build


def reduce_unstable_number(p: ParamVector, eps) -> PerturbationOutcome:
    """One perturbation lowering the unstable number, re-verified from scratch."""
    a = analyze(p)
    _require_periodic(a, "reduce_unstable_number")
    if a.U == 0:
        raise NoOffenderError("U = 0")
    beta = select_offender(a)
    U0 = a.U

    def accept(b: Analysis) -> str | None:
        if not b.finite_type or not b.eventually_periodic:
            return "not eventually periodic"
        if b.U >= U0:
            return f"U = {b.U}, not below {U0}"
        return None

    if beta.side == MINUS:
        out = run_stage(p.mirrored(), "reduce", _reduce_candidates(beta.mirrored()), accept, eps)
        if out.ok:
            out = _mirror_outcome(out, p)
        else:
            out.source = out.result = p
    else:
        out = run_stage(p, "reduce", _reduce_candidates(beta), accept, eps)
    out.detail = f"offender {critical_label(p.beta.index(beta.value), beta.side)}; {out.detail}"
    out.verification["U"] = [U0, analyze(out.result).U if out.ok else U0]
    return out


def clear_outside_connections(p: ParamVector, eps) -> PerturbationOutcome:
    """Offset every connection running entirely outside X, keeping the rest."""
    if stability_report(p).verdict == "stable":
        return PerturbationOutcome(p, p, SUCCESS, {}, {"stable": True}, "unchanged", Fraction(eps))

    def build(a: Analysis, e: Fraction):
        keep, moved = [], []
        for c in critical_connections(a.p):
            target = SignedPoint(a.p.beta[c.target], c.source.side)
            if not a.X.contains(c.source) and not a.X.contains(target):
                moved.append(_as_directive(c, e if c.source.side == PLUS else -e))
            else:
                keep.append(_as_directive(c))
        if not moved:
            return []
        return [("clear", DeltaRequest(None, {}, {}, tuple(_dedupe(moved + keep)))),
                ("clear-only", DeltaRequest(None, {}, {}, tuple(_dedupe(moved))))]

    def accept(b: Analysis) -> str | None:
        return None if stability_report(b.p).verdict == "stable" else "not stable"

    return run_stage(p, "clear", build, accept, eps)


# -- pipeline ---------------------------------------------------------------------

class PipelineStalledError(ITMError):
    def __init__(self, stage: str, outcome: PerturbationOutcome):
        super().__init__(f"pipeline stalled in stage {stage}: {outcome.detail}")
        self.stage = stage
        self.outcome = outcome


def _stage_record(name: str, out: PerturbationOutcome, eps: Fraction, U0=None, U1=None) -> dict:
    rec = {"stage": name, "status": out.status, "method": out.method, "eps": str(eps),
           "distance": str(out.result.distance(out.source)),
           "before": map_to_record(out.source), "after": map_to_record(out.result)}
    if U0 is not None:
        rec["U"] = [U0, U1]
    if out.detail:
        rec["detail"] = out.detail
    return rec


def perturb_to_stable(p: ParamVector, eps, max_rounds: int | None = None,
                      max_denominator: int | None = None) -> PerturbationOutcome:
    """Correspondence, unstable-number reduction and clearing until the map is stable.

    Stage ``k`` may move the parameters by at most ``eps / 2**k``, so the
    total distance stays below ``eps`` plus any rationalization step.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    source, trail, feasible = p, [], True
    spent = Fraction(0)
    if max_denominator is not None:
        p = rationalize(p, max_denominator)
        spent += p.distance(source)
        trail.append({"stage": "rationalize", "distance": str(spent)})

    def finish(cur: ParamVector, method: str) -> PerturbationOutcome:
        rep = stability_report(cur)
        if rep.verdict != "stable":
            out = PerturbationOutcome(source, cur, VERIFICATION_FAILED, {}, {"stable": False},
                                      method, eps, "final map is not stable", trail)
            raise PipelineStalledError("final", out)
        realized = {"distance": cur.distance(source), "budget": spent}
        return PerturbationOutcome(source, cur, SUCCESS, realized,
                                   {"stable": True, "structured_feasible": feasible},
                                   method, eps, trail=trail)

    if stability_report(p).verdict == "stable":
        return finish(p, "already-stable")
    stage_eps = (eps / 2 ** k for k in range(1, 10 ** 6))

    def stalled(name: str, cur: ParamVector, out: PerturbationOutcome) -> PipelineStalledError:
        part = PerturbationOutcome(source, cur, out.status, {}, {"structured_feasible": feasible},
                                   name, eps, out.detail, trail)
        return PipelineStalledError(name, part)

    a = analyze(p)
    if not a.finite_type or not a.eventually_periodic:
        out = PerturbationOutcome(p, p, INFEASIBLE, detail="map is not finite type and eventually periodic")
        raise stalled("analysis", p, out)
    if max_rounds is None:
        max_rounds = a.U + 1
    rounds = 0
    while a.U > 0:
        if not a.has_correspondence:
            e = next(stage_eps)
            out = perturb_to_correspondence(p, e)
            spent += e
            feasible &= out.verification.get("structured_feasible", True)
            trail.append(_stage_record("correspondence", out, e))
            if not out.ok:
                raise stalled("correspondence", p, out)
            p = out.result
            a = analyze(p)
            if a.U == 0:
                break
        if rounds >= max_rounds:
            raise stalled("reduce", p, PerturbationOutcome(p, p, INFEASIBLE, detail="max rounds reached"))
        e = next(stage_eps)
        U0 = a.U
        out = reduce_unstable_number(p, e)
        spent += e
        feasible &= out.verification.get("structured_feasible", True)
        rounds += 1
        if not out.ok:
            trail.append(_stage_record("reduce", out, e, U0, U0))
            raise stalled("reduce", p, out)
        p = out.result
        a = analyze(p)
        trail.append(_stage_record("reduce", out, e, U0, a.U))
    e = next(stage_eps)
    out = clear_outside_connections(p, e)
    spent += e
    feasible &= out.verification.get("structured_feasible", True)
    trail.append(_stage_record("clear", out, e))
    if not out.ok:
        raise stalled("clear", p, out)
    return finish(out.result, "pipeline")
