"""Named example maps and seeded random corpora of rational maps."""

from __future__ import annotations

import random
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

from .core import ParamVector, require_valid


def _map(beta, gamma) -> ParamVector:
    return require_valid(ParamVector(tuple(Fraction(b) for b in beta),
                                     tuple(Fraction(g) for g in gamma)))


# Two branches, attractor [0, 3/4) rotating by 1/3 of its length: stable.
M2 = _map(["0", "1/2", "1"], ["1/4", "-1/2"])
# Three branches with a fixed middle branch: unstable, U = 2.
M3 = _map(["0", "1/3", "2/3", "1"], ["1/3", "0", "-2/3"])
IDENTITY = _map(["0", "1/2", "1"], ["0", "0"])
# Four branches acting as the exchange of order (4 3 2 1) on [0, 1).
N4 = _map(["0", "1/10", "3/10", "6/10", "1"], ["9/10", "6/10", "1/10", "-6/10"])

NAMED = {"M2": M2, "M3": M3, "identity": IDENTITY, "N4": N4}


@lru_cache(maxsize=None)
def _grid(max_den: int) -> tuple[Fraction, ...]:
    """Sorted rationals in ``[-1, 1]`` with denominator at most ``max_den``."""
    return tuple(sorted({Fraction(n, q) for q in range(1, max_den + 1) for n in range(-q, q + 1)}))


def random_map(rng: random.Random, r: int, max_den: int) -> ParamVector:
    """Uniform choice among grid points: increasing betas, then admissible gammas."""
    inner = [x for x in _grid(max_den) if 0 < x < 1]
    if len(inner) < r - 1:
        raise ValueError(f"denominators <= {max_den} cannot hold {r - 1} discontinuities")
    beta = [Fraction(0)] + sorted(rng.sample(inner, r - 1)) + [Fraction(1)]
    grid = _grid(max_den)
    gamma = []
    for i in range(1, r + 1):
        lo, hi = -beta[i - 1], 1 - beta[i]
        gamma.append(rng.choice([g for g in grid if lo <= g <= hi]))
    return require_valid(ParamVector(tuple(beta), tuple(gamma)))


def random_corpus(seed: int, n: int, rs: tuple[int, ...] = (2, 3, 4),
                  max_den: int = 12) -> list[ParamVector]:
    rng = random.Random(seed)
    return [random_map(rng, rng.choice(rs), max_den) for _ in range(n)]


def all_two_branch_maps(max_den: int) -> Iterator[ParamVector]:
    """Every valid ``r = 2`` map whose parameters have denominators at most ``max_den``."""
    grid = _grid(max_den)
    for b in grid:
        if not 0 < b < 1:
            continue
        for g1 in grid:
            if not 0 <= g1 <= 1 - b:
                continue
            for g2 in grid:
                if -b <= g2 <= 0:
                    yield ParamVector((Fraction(0), b, Fraction(1)), (g1, g2))
