"""Acceptance criteria; each test records one pass/fail line in the run summary."""

from __future__ import annotations

import random
import time
from fractions import Fraction as F

import pytest

from acceptance_log import record
from bruteforce import Grid, oracle
from itmlab.attractor import compute_attractor, stabilization_budget
from itmlab.cli import main
from itmlab.core import IntervalSet, ParamVector, critical_points, is_valid, orbit_budget, orbit_record
from itmlab.corpus import IDENTITY, M2, M3, N4, all_two_branch_maps, random_corpus
from itmlab.critical import unstable_number
from itmlab.mapfile import map_from_record, write_map
from itmlab.perturb import PipelineStalledError, perturb_to_stable
from itmlab.returnmap import branch_images, classify_component, return_maps
from itmlab.stability import stability_report
from itmlab.vectors import build_bundle, independence_witnesses, verify_identities

TOTALITY_SEED = 2026
PIPELINE_SEED = 1
OPENNESS_SEED = 9


@pytest.fixture(scope="module")
def totality_corpus():
    """1000 random maps with r in {2, 3, 4} and denominators <= 12, with attractors."""
    maps = random_corpus(TOTALITY_SEED, 1000, (2, 3, 4), 12)
    t0 = time.perf_counter()
    results = [(p, compute_attractor(p, stabilization_budget(p))) for p in maps]
    return results, time.perf_counter() - t0


@pytest.fixture(scope="module")
def corpus_components(totality_corpus):
    results, _ = totality_corpus
    return [(p, d) for p, att in results if att.finite_type for d in return_maps(p, att.X)]


def test_c1_two_branch_finite_type():
    t0 = time.perf_counter()
    maps = list(all_two_branch_maps(8))
    bad = []
    for p in maps:
        att = compute_attractor(p, stabilization_budget(p))
        if not att.finite_type or len(att.X) != 1:
            bad.append(p)
    dt = time.perf_counter() - t0
    ok = not bad and len(maps) >= 2000 and dt < 60
    record("C1", "r=2 finite type", ok,
           f"{len(maps) - len(bad)}/{len(maps)} maps finite type with one component in {dt:.1f}s")
    assert ok, bad[:5]


def test_c2_rational_totality(totality_corpus):
    results, dt_att = totality_corpus
    t0 = time.perf_counter()
    not_finite = [p for p, att in results if not att.finite_type]
    open_orbits = [(p, c) for p, _ in results for c in critical_points(p)
                   if not orbit_record(p, c, orbit_budget(p)).periodic]
    dt = dt_att + time.perf_counter() - t0
    ok = not not_finite and not open_orbits and len(results) == 1000 and dt < 120
    record("C2", "rational totality", ok,
           f"{len(results) - len(not_finite)}/1000 finite type, {len(open_orbits)} open critical "
           f"orbits, {dt:.1f}s")
    assert ok


def test_c3_return_map_bijectivity(corpus_components):
    bad = []
    for p, d in corpus_components:
        J = IntervalSet([(d.J.lo, d.J.hi)])
        domains = IntervalSet([(b.lo, b.hi) for b in d.branches])
        lengths = sum((b.hi - b.lo for b in d.branches), F(0))
        if domains != J or branch_images(d) != J or lengths != d.J.length:
            bad.append((p, d.J))
    ok = not bad
    record("C3", "return-map bijectivity", ok,
           f"{len(corpus_components) - len(bad)}/{len(corpus_components)} components partition J exactly")
    assert ok, bad[:5]


def test_c4_identity_suite(corpus_components):
    failures = []
    checked = 0
    for p, d in corpus_components:
        bundle = build_bundle(d)
        checked += len(bundle.entries)
        verdict = verify_identities(p, bundle)
        if not verdict.passed:
            failures.append((p, verdict.failures))
    ok = not failures
    record("C4", "coefficient-vector identities", ok,
           f"{checked} identities on {len(corpus_components)} components, {len(failures)} failures")
    assert ok, failures[:3]


def test_c5_independence(corpus_components):
    big = [(p, d) for p, d in corpus_components if d.N >= 3]
    bad = []
    for p, d in big:
        vecs, rank = independence_witnesses(p, d)
        if rank < d.N - 2 or any(v.product(p) != 0 for v in vecs):
            bad.append((p, d.J, rank))
    ok = not bad and len(big) > 0
    record("C5", "N-2 independent relations", ok,
           f"{len(big) - len(bad)}/{len(big)} components with N>=3 reach rank N-2 with zero products")
    assert ok, bad[:5]


def test_c6_golden_fixtures():
    checks = {}
    for name, p, X, U, verdict, a3 in (
        ("M2", M2, [(F(0), F(3, 4))], 0, "stable", set()),
        ("M3", M3, [(F(1, 3), F(2, 3))], 2, "unstable", {(F(2, 3), "+"), (F(1, 3), "-")}),
    ):
        o = oracle(p.beta, p.gamma)
        g = Grid.of(p.beta, p.gamma)
        att = compute_attractor(p)
        rep = stability_report(p)
        checks[name] = (
            o.X == X and list(att.X) == X
            and o.U == U and unstable_number(p, att.X) == U
            and o.verdict == verdict and rep.verdict == verdict
            and {(g.frac(k), s) for k, s in o.a3_bad} == a3
            and set(rep.a3.witness) == {f"b{p.beta.index(v)}{s}" for v, s in a3}
        )
    ok = all(checks.values())
    record("C6", "golden fixtures M2/M3", ok,
           ", ".join(f"{k} {'matches' if v else 'differs'}" for k, v in checks.items())
           + " (oracle and package)")
    assert ok


@pytest.fixture(scope="module")
def pipeline_runs():
    """perturb_to_stable on 50 random r=3 maps plus M3; each entry is (source, outcome, stalled)."""
    runs = []
    for p in random_corpus(PIPELINE_SEED, 50, (3,), 12) + [M3]:
        try:
            runs.append((p, perturb_to_stable(p, F(1, 100)), False))
        except PipelineStalledError as exc:
            runs.append((p, exc.outcome, True))
    return runs


def test_c7_pipeline_soundness(pipeline_runs):
    unsound, incomplete = [], []
    successes = 0
    for p, out, stalled in pipeline_runs:
        if out.ok and not stalled:
            successes += 1
            q = out.result
            if stability_report(q).verdict != "stable" or oracle(q.beta, q.gamma).verdict != "stable":
                unsound.append(p)
        elif out.verification.get("structured_feasible", False):
            incomplete.append(p)
    n = len(pipeline_runs)
    ok = not unsound and not incomplete
    record("C7", "pipeline soundness", ok,
           f"{successes}/{n} verified stable ({100 * successes / n:.0f}% success), "
           f"{len(unsound)} unsound, {len(incomplete)} feasible runs without success")
    assert ok, (unsound[:3], incomplete[:3])


def test_c8_strict_descent(pipeline_runs):
    rounds, bad = 0, []
    for p, out, _ in pipeline_runs:
        for st in out.trail:
            if st.get("stage") != "reduce" or st["status"] != "success":
                continue
            rounds += 1
            before, after = map_from_record(st["before"]), map_from_record(st["after"])
            u0 = oracle(before.beta, before.gamma).U
            u1 = oracle(after.beta, after.gamma).U
            if not u1 < u0 or st["U"] != [u0, u1]:
                bad.append((p, u0, u1))
    ok = not bad and rounds > 0
    record("C8", "strict descent", ok,
           f"{rounds - len(bad)}/{rounds} successful reduction rounds lower U (oracle recount)")
    assert ok, bad[:3]


def _jiggle(p: ParamVector, rng: random.Random) -> ParamVector | None:
    """Move interior discontinuities and translations by at most 10**-6 each."""
    def d():
        return F(rng.randint(-10, 10), 10 ** 7)
    beta = [p.beta[0]] + [b + d() for b in p.beta[1:-1]] + [p.beta[-1]]
    try:
        q = ParamVector(tuple(beta), tuple(g + d() for g in p.gamma))
    except ValueError:
        return None
    return q if is_valid(q) else None


def _openness_failures(p: ParamVector, rep, rng: random.Random, stop_early: bool) -> int:
    """Failed samples among 20 valid perturbations; undecided verdicts count as failures."""
    samples = failed = 0
    while samples < 20:
        q = _jiggle(p, rng)
        if q is None:
            continue
        samples += 1
        r = stability_report(q, 10 ** 4)
        if r.verdict != "stable" or len(r.attractor.X) != len(rep.attractor.X):
            failed += 1
            if stop_early:
                break
    return failed


@pytest.fixture(scope="module")
def stable_candidates():
    """(map, report, has a dynamically trivial component) for every stable candidate map."""
    out = []
    for p in [M2, M3, N4, IDENTITY] + random_corpus(PIPELINE_SEED, 50, (3,), 12):
        rep = stability_report(p)
        if rep.verdict == "stable":
            out.append((p, rep, any(classify_component(d) == "dynamically_trivial" for d in rep.maps)))
    return out


def test_c9_openness_nontrivial(stable_candidates):
    rng = random.Random(OPENNESS_SEED)
    scope = [(p, rep) for p, rep, trivial in stable_candidates if not trivial]
    bad = [p for p, rep in scope if _openness_failures(p, rep, rng, stop_early=False)]
    ok = not bad and len(scope) > 0
    record("C9a", "openness, maps without trivial components", ok,
           f"{len(scope) - len(bad)}/{len(scope)} stable maps keep stability and component count "
           f"under 20 perturbations <= 1e-6")
    assert ok, bad[:3]


@pytest.mark.xfail(strict=True, reason="stable maps with a dynamically trivial component are not "
                   "open under perturbation of the translations")
def test_c9_openness_all_stable(stable_candidates):
    # One counterexample falsifies the criterion; sampling stops there because
    # perturbed maps with many trivial components take minutes per report.
    rng = random.Random(OPENNESS_SEED)
    checked = 0
    for p, rep, trivial in stable_candidates:
        checked += 1
        failed = _openness_failures(p, rep, rng, stop_early=True)
        if failed:
            kind = "a trivial component" if trivial else "no trivial component"
            record("C9", "openness, every stable map", False,
                   f"counterexample after {checked}/{len(stable_candidates)} maps: {p} "
                   f"(has {kind}) loses stability or its component count")
            assert False
    record("C9", "openness, every stable map", True, f"{checked} stable maps pass")


def test_c10_scan_determinism(tmp_path):
    base = tmp_path / "m3.itm"
    write_map(base, M3)
    outputs = {}
    t0 = time.perf_counter()
    for w in (1, 4):
        csv, ppm = tmp_path / f"w{w}.csv", tmp_path / f"w{w}.ppm"
        code = main(["scan", str(base), "--x", "gamma1", "--x-range", "0:1", "--y", "gamma3",
                     "--y-range=-1:0", "--n", "64", "--depth", "full", "--max-denominator", "32",
                     "--workers", str(w), "--csv", str(csv), "--ppm", str(ppm)])
        assert code == 0
        outputs[w] = (csv.read_bytes(), ppm.read_bytes())
    dt = time.perf_counter() - t0
    rows = outputs[1][0].decode().count("\n") - 1
    ok = outputs[1] == outputs[4] and rows == 64 * 64 and dt < 300
    record("C10", "scan determinism", ok,
           f"64x64 scan, workers 1 and 4 byte-identical CSV and PPM: {outputs[1] == outputs[4]}, "
           f"{rows} rows, {dt:.1f}s for both runs")
    assert ok
