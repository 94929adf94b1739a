"""JSON map files: ``{"r": 3, "beta": ["0", "1/3", ...], "gamma": [...]}``."""

from __future__ import annotations

import json
from pathlib import Path

from .core import ITMError, ParamVector, fmt_rat, parse_rat, validate_itm


class MapFileError(ITMError):
    pass


def map_to_record(p: ParamVector) -> dict:
    return {"r": p.r, "beta": [fmt_rat(b) for b in p.beta], "gamma": [fmt_rat(g) for g in p.gamma]}


def map_from_record(rec: dict) -> ParamVector:
    if not isinstance(rec, dict):
        raise MapFileError("map file must hold a JSON object")
    for key in ("r", "beta", "gamma"):
        if key not in rec:
            raise MapFileError(f"missing field {key!r}")
    r = rec["r"]
    if not isinstance(r, int) or isinstance(r, bool) or r < 1:
        raise MapFileError(f"field 'r': expected a positive integer, got {r!r}")
    values = {}
    for key in ("beta", "gamma"):
        items = rec[key]
        if not isinstance(items, list):
            raise MapFileError(f"field {key!r}: expected a list of rational strings")
        parsed = []
        for k, item in enumerate(items):
            if not isinstance(item, (str, int)) or isinstance(item, bool):
                raise MapFileError(f"field {key}[{k}]: expected a rational string, got {item!r}")
            try:
                parsed.append(parse_rat(item))
            except (ValueError, ZeroDivisionError) as exc:
                raise MapFileError(f"field {key}[{k}]: cannot parse {item!r} ({exc})") from None
        values[key] = tuple(parsed)
    if len(values["beta"]) != r + 1:
        raise MapFileError(f"field 'beta': expected {r + 1} entries, got {len(values['beta'])}")
    if len(values["gamma"]) != r:
        raise MapFileError(f"field 'gamma': expected {r} entries, got {len(values['gamma'])}")
    p = ParamVector(values["beta"], values["gamma"])
    problems = validate_itm(p)
    if problems:
        raise MapFileError("invalid map: " + "; ".join(str(v) for v in problems))
    return p


def dumps_map(p: ParamVector) -> str:
    return json.dumps(map_to_record(p), indent=2) + "\n"


def loads_map(text: str) -> ParamVector:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return map_from_record(rec)


def read_map(path: str | Path) -> ParamVector:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MapFileError(f"{path}: {exc.strerror}") from None
    return loads_map(text)


def write_map(path: str | Path, p: ParamVector) -> None:
    Path(path).write_text(dumps_map(p))
