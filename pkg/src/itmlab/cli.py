"""Command-line front end: ``itmlab analyze | scan | perturb | vectors``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .attractor import BudgetCeilingError, compute_attractor, stabilization_budget
from .core import ITMError, ParamVector, critical_label, fmt_rat, is_valid, parse_rat
from .critical import (correspondence_report, cycles_partition, ghost_graph_and_a3,
                       unstable_number, OrbitHits)
from .mapfile import MapFileError, map_to_record, read_map, write_map
from .perturb import PipelineStalledError, perturb_to_stable
from .returnmap import classify_component, return_maps
from .stability import stability_report
from .vectors import NTooSmallError, build_bundle, independence_witnesses, verify_identities

EXIT_STABLE, EXIT_UNSTABLE, EXIT_UNDECIDED = 0, 1, 2
EXIT_STALLED = 3
EXIT_USAGE = 64
EXIT_DATA = 65

# Scan pixmap colours.
PALETTE = {
    "infeasible": (0, 0, 0),
    "undecided": (128, 128, 128),
    "finite": (70, 130, 180),
    "stable": (46, 139, 87),
    "unstable": (220, 120, 60),
}


class UsageError(ITMError):
    pass


# -- output ---------------------------------------------------------------------

def _text(obj, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(obj, dict):
        out = []
        for k, v in obj.items():
            if isinstance(v, (dict, list)) and v and not _flat(v):
                out.append(f"{pad}{k}:")
                out.extend(_text(v, indent + 1))
            else:
                out.append(f"{pad}{k}: {_inline(v)}")
        return out
    if isinstance(obj, list):
        out = []
        for v in obj:
            if isinstance(v, (dict, list)) and v and not _flat(v):
                out.append(f"{pad}-")
                out.extend(_text(v, indent + 1))
            else:
                out.append(f"{pad}- {_inline(v)}")
        return out
    return [f"{pad}{_inline(obj)}"]


def _flat(v) -> bool:
    return isinstance(v, list) and all(not isinstance(x, (dict, list)) for x in v)


def _inline(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_inline(x) for x in v) + "]"
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    return str(v)


def _emit(args, record: dict) -> None:
    if args.format == "json":
        text = json.dumps(record, indent=2) + "\n"
    else:
        text = "\n".join(_text(record)) + "\n"
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _rat_arg(text: str) -> Fraction:
    try:
        return parse_rat(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _range_arg(text: str) -> tuple[Fraction, Fraction]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}")
    return _rat_arg(lo), _rat_arg(hi)


def _max_denominator(args) -> int | None:
    if args.max_denominator is not None:
        return args.max_denominator
    env = os.environ.get("ITMLAB_MAX_DENOM")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ITMLAB_MAX_DENOM must be an integer, got {env!r}") from None
    return None


def _budget(p: ParamVector, ceiling: int | None) -> int | None:
    """Stabilization budget under the ``--budget`` ceiling; None when it exceeds it."""
    try:
        return stabilization_budget(p, ceiling)
    except BudgetCeilingError:
        return None


# -- analyze ---------------------------------------------------------------------

def analyze_record(p: ParamVector, ceiling: int | None = None) -> tuple[dict, str]:
    rec = {"map": map_to_record(p)}
    budget = _budget(p, ceiling)
    if budget is None:
        rec["attractor"] = {"verdict": "undecided", "budget": ceiling,
                            "reason": "denominator exceeds the budget ceiling"}
        rec["stability"] = {"verdict": "undecided"}
        return rec, "undecided"
    att = compute_attractor(p, budget)
    rec["attractor"] = att.to_record()
    if not att.finite_type:
        rec["stability"] = {"verdict": "undecided"}
        return rec, "undecided"
    X = att.X
    maps = return_maps(p, X)
    hits = OrbitHits(p, X, maps)
    rec["components"] = [
        dict(d.to_record(), classification=classify_component(d)) for d in maps
    ]
    rec["cycles"] = [sorted(c) for c in cycles_partition(p, X, hits)]
    rec["unstable_number"] = unstable_number(p, X, hits)
    rec["correspondence"] = {
        str(i): {"verdict": e.verdict, "failing_side": e.failing_side}
        for i, e in correspondence_report(p, X).items()
    }
    graph, bad = ghost_graph_and_a3(p, X, hits)
    rec["ghost_graph"] = {"edges": graph.to_record(p),
                          "a3_violations": sorted(critical_label(p.beta.index(x.value), x.side)
                                                  for x in bad)}
    report = stability_report(p, budget)
    rec["stability"] = report.to_record()
    return rec, report.verdict


def cmd_analyze(args) -> int:
    p = read_map(args.map)
    rec, verdict = analyze_record(p, args.budget)
    _emit(args, rec)
    return {"stable": EXIT_STABLE, "unstable": EXIT_UNSTABLE}.get(verdict, EXIT_UNDECIDED)


# -- scan ------------------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    kind: str               # "gamma" | "beta"
    index: int
    lo: Fraction
    hi: Fraction

    @classmethod
    def parse(cls, name: str, lo: Fraction, hi: Fraction, r: int) -> "Axis":
        for kind, first, last in (("gamma", 1, r), ("beta", 1, r - 1)):
            if name.startswith(kind) and name[len(kind):].isdigit():
                k = int(name[len(kind):])
                if not first <= k <= last:
                    raise UsageError(f"axis {name}: index must be in {first}..{last}")
                if not lo < hi:
                    raise UsageError(f"axis {name}: empty range [{lo}, {hi}]")
                return cls(kind, k, lo, hi)
        raise UsageError(f"axis {name!r}: expected gamma<i> or beta<i>")

    def value(self, cell: int, n: int, max_den: int) -> Fraction:
        """Cell centre, rounded to the nearest rational of bounded denominator."""
        x = self.lo + (cell + Fraction(1, 2)) * (self.hi - self.lo) / n
        return x.limit_denominator(max_den)


@dataclass(frozen=True)
class ScanSpec:
    base: ParamVector
    x: Axis
    y: Axis
    n: int
    depth: str              # "type" | "full"
    ceiling: int | None
    max_den: int

    def cell_map(self, i: int, j: int) -> ParamVector:
        beta, gamma = list(self.base.beta), list(self.base.gamma)
        for axis, cell in ((self.x, i), (self.y, j)):
            v = axis.value(cell, self.n, self.max_den)
            if axis.kind == "gamma":
                gamma[axis.index - 1] = v
            else:
                beta[axis.index] = v
        return ParamVector(tuple(beta), tuple(gamma))


def scan_cell(spec: ScanSpec, i: int, j: int) -> dict:
    p = spec.cell_map(i, j)
    row = {"i": i, "j": j, "beta": " ".join(fmt_rat(b) for b in p.beta),
           "gamma": " ".join(fmt_rat(g) for g in p.gamma), "verdict": "infeasible",
           "n_star_or_budget": "", "stability": ""}
    if not is_valid(p):
        return row
    budget = _budget(p, spec.ceiling)
    if budget is None:
        row.update(verdict="undecided", n_star_or_budget=spec.ceiling)
        return row
    att = compute_attractor(p, budget)
    if not att.finite_type:
        row.update(verdict="undecided", n_star_or_budget=budget)
        return row
    row.update(verdict="finite", n_star_or_budget=att.n_star)
    if spec.depth == "full":
        row["stability"] = stability_report(p, budget).verdict
    return row


def _scan_task(task: tuple[ScanSpec, int, int]) -> dict:
    return scan_cell(*task)


def run_scan(spec: ScanSpec, workers: int = 1) -> list[dict]:
    """Rows in grid order ``(j, i)``; the order never depends on ``workers``."""
    tasks = [(spec, i, j) for j in range(spec.n) for i in range(spec.n)]
    if workers <= 1:
        return [_scan_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_scan_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


SCAN_COLUMNS = ("i", "j", "beta", "gamma", "verdict", "n_star_or_budget", "stability")


def scan_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SCAN_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cell_colour(row: dict) -> tuple[int, int, int]:
    if row["verdict"] == "finite" and row["stability"] in ("stable", "unstable"):
        return PALETTE[row["stability"]]
    return PALETTE[row["verdict"]]


def scan_ppm(rows: list[dict], n: int) -> str:
    """Plain P3 pixmap; pixel ``(i, n-1-j)`` so the y axis grows upwards."""
    grid = {(row["i"], row["j"]): cell_colour(row) for row in rows}
    lines = ["P3", "# itmlab scan palette: " + ", ".join(
        f"{k}={' '.join(map(str, v))}" for k, v in PALETTE.items()), f"{n} {n}", "255"]
    for y in range(n):
        j = n - 1 - y
        lines.append(" ".join(" ".join(map(str, grid[(i, j)])) for i in range(n)))
    return "\n".join(lines) + "\n"


def cmd_scan(args) -> int:
    base = read_map(args.map)
    max_den = _max_denominator(args) or 32
    spec = ScanSpec(base, Axis.parse(args.x, args.x_range[0], args.x_range[1], base.r),
                    Axis.parse(args.y, args.y_range[0], args.y_range[1], base.r),
                    args.n, args.depth, args.budget, max_den)
    if args.n < 1:
        raise UsageError("--n must be positive")
    rows = run_scan(spec, args.workers)
    Path(args.csv).write_text(scan_csv(rows))
    if args.ppm:
        Path(args.ppm).write_text(scan_ppm(rows, spec.n))
    counts: dict[str, int] = {}
    for row in rows:
        key = row["stability"] or row["verdict"]
        counts[key] = counts.get(key, 0) + 1
    _emit(args, {"cells": len(rows), "counts": dict(sorted(counts.items())),
                 "csv": args.csv, "ppm": args.ppm, "palette": {k: list(v) for k, v in PALETTE.items()}})
    return 0


# -- perturb ---------------------------------------------------------------------

def cmd_perturb(args) -> int:
    p = read_map(args.map)
    if args.eps <= 0:
        raise UsageError("--eps must be positive")
    try:
        out = perturb_to_stable(p, args.eps, args.max_rounds, _max_denominator(args))
    except PipelineStalledError as exc:
        rec = exc.outcome.to_record()
        rec["stalled_stage"] = exc.stage
        _emit(args, rec)
        print(f"itmlab: pipeline stalled in stage {exc.stage}", file=sys.stderr)
        return EXIT_STALLED
    if args.out:
        write_map(args.out, out.result)
    _emit(args, out.to_record())
    return 0


# -- vectors ---------------------------------------------------------------------

def vectors_record(p: ParamVector, component: int, ceiling: int | None = None) -> dict:
    budget = _budget(p, ceiling)
    att = compute_attractor(p, budget) if budget is not None else None
    if att is None or not att.finite_type:
        raise UsageError("map is not of finite type within the budget")
    maps = return_maps(p, att.X)
    if not 0 <= component < len(maps):
        raise UsageError(f"component {component} out of range (map has {len(maps)})")
    d = maps[component]
    bundle = build_bundle(d)
    verdict = verify_identities(p, bundle)
    rec = {"component": component, "J": [fmt_rat(d.J.lo), fmt_rat(d.J.hi)], "N": d.N,
           "sigma": list(d.sigma), "bundle": bundle.to_record(),
           "identities": {"pass": verdict.passed, "failures": list(verdict.failures)}}
    try:
        vecs, rank = independence_witnesses(p, d)
        rec["independence"] = {"vectors": [v.to_record() for v in vecs], "rank": rank,
                               "products": [fmt_rat(v.product(p)) for v in vecs]}
    except NTooSmallError as exc:
        rec["independence"] = {"skipped": str(exc)}
    return rec


def cmd_vectors(args) -> int:
    p = read_map(args.map)
    try:
        rec = vectors_record(p, args.component, args.budget)
    except UsageError as exc:
        print(f"itmlab: {exc}", file=sys.stderr)
        return EXIT_DATA
    _emit(args, rec)
    return 0


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itmlab", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("-o", "--output", help="write the report here instead of stdout")
    common.add_argument("--budget", type=int, default=None,
                        help="ceiling on the stabilization budget; larger maps are undecided")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="full analysis of one map")
    a.add_argument("map")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("scan", parents=[common], help="scan a two-parameter family")
    s.add_argument("map", help="base map; the two axes override its parameters")
    s.add_argument("--x", required=True, help="x axis, e.g. gamma1 or beta2")
    s.add_argument("--x-range", type=_range_arg, required=True, metavar="LO:HI",
                   help="write --x-range=-1/2:0 when LO is negative")
    s.add_argument("--y", required=True)
    s.add_argument("--y-range", type=_range_arg, required=True, metavar="LO:HI")
    s.add_argument("--n", type=int, default=16, help="cells per axis")
    s.add_argument("--depth", choices=("type", "full"), default="type")
    s.add_argument("--max-denominator", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--csv", required=True)
    s.add_argument("--ppm", default=None)
    s.set_defaults(func=cmd_scan)

    pt = sub.add_parser("perturb", parents=[common], help="perturb a map to a stable one")
    pt.add_argument("map")
    pt.add_argument("--eps", type=_rat_arg, default=Fraction(1, 100))
    pt.add_argument("--max-rounds", type=int, default=None)
    pt.add_argument("--max-denominator", type=int, default=None)
    pt.add_argument("--out", help="write the stabilized map file here")
    pt.set_defaults(func=cmd_perturb)

    v = sub.add_parser("vectors", parents=[common], help="coefficient vectors of one component")
    v.add_argument("map")
    v.add_argument("--component", type=int, default=0)
    v.set_defaults(func=cmd_vectors)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        return args.func(args)
    except (MapFileError, UsageError) as exc:
        print(f"itmlab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
