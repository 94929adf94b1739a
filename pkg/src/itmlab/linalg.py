"""Exact linear algebra over the rationals."""

from __future__ import annotations

from fractions import Fraction
from math import lcm
from typing import Sequence

Matrix = Sequence[Sequence[int | Fraction]]


def _integer_rows(rows: Matrix) -> list[list[int]]:
    out = []
    for row in rows:
        row = [Fraction(v) for v in row]
        m = lcm(*(v.denominator for v in row)) if row else 1
        out.append([int(v * m) for v in row])
    return out


def rank(rows: Matrix) -> int:
    """Rank by fraction-free (Bareiss) elimination."""
    a = _integer_rows(rows)
    if not a or not a[0]:
        return 0
    n, m = len(a), len(a[0])
    r, prev = 0, 1
    for c in range(m):
        piv = next((i for i in range(r, n) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        for i in range(r + 1, n):
            for k in range(c + 1, m):
                a[i][k] = (a[r][c] * a[i][k] - a[i][c] * a[r][k]) // prev
            a[i][c] = 0
        prev = a[r][c]
        r += 1
        if r == n:
            break
    return r


def rref(rows: Matrix) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form and pivot columns."""
    a = [[Fraction(v) for v in row] for row in rows]
    if not a:
        return [], []
    n, m = len(a), len(a[0])
    pivots, r = [], 0
    for c in range(m):
        piv = next((i for i in range(r, n) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [v * inv for v in a[r]]
        for i in range(n):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    return a, pivots


def nullspace(rows: Matrix, ncols: int | None = None) -> list[list[Fraction]]:
    """Basis of ``{x : A x = 0}``."""
    if ncols is None:
        if not rows:
            raise ValueError("ncols is required for an empty matrix")
        ncols = len(rows[0])
    if not rows:
        return [[Fraction(int(i == j)) for i in range(ncols)] for j in range(ncols)]
    a, pivots = rref(rows)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        x = [Fraction(0)] * ncols
        x[f] = Fraction(1)
        for i, c in enumerate(pivots):
            x[c] = -a[i][f]
        basis.append(x)
    return basis


def left_nullspace(rows: Matrix) -> list[list[Fraction]]:
    """Basis of ``{y : y A = 0}``: linear dependences among the rows."""
    if not rows:
        return []
    cols = [list(c) for c in zip(*rows)]
    return nullspace(cols, len(rows))


def solve_least_norm(A: Matrix, b: Sequence[Fraction]) -> list[Fraction] | None:
    """Minimum-norm solution of ``A x = b``, or None if inconsistent."""
    if not A:
        return []
    n = len(A[0])
    aug = [list(row) + [bi] for row, bi in zip(A, b)]
    red, pivots = rref(aug)
    if n in pivots:
        return None
    # Independent rows of A span its row space; solve (A_I A_I^T) y = b_I.
    keep, basis = [], []
    for i, row in enumerate(A):
        trial = basis + [list(row)]
        if rank(trial) > len(basis):
            basis = trial
            keep.append(i)
    if not keep:
        return [Fraction(0)] * n
    G = [[sum(Fraction(x) * y for x, y in zip(A[i], A[k])) for k in keep] for i in keep]
    gred, gp = rref([g + [Fraction(b[i])] for g, i in zip(G, keep)])
    y = [Fraction(0)] * len(keep)
    for row, c in zip(gred, gp):
        y[c] = row[-1]
    x = [sum(yk * Fraction(A[i][c]) for yk, i in zip(y, keep)) for c in range(n)]
    return x
