"""Ultrametric Gaussian elimination with valuation pivoting.

Pivots are chosen with minimal valuation (largest norm).  A pivot whose
valuation is at or above half the working precision is treated as noise and
refused, so independence is never declared from entries that could be zero.
"""

from __future__ import annotations

from .fields import LocalFieldElement, PrecisionExhausted


class SingularSystem(Exception):
    pass


def _val(x: LocalFieldElement):
    return x.valuation


def ultrametric_rank(rows, pivot_threshold=None) -> int:
    """Rank of a matrix of LocalFieldElements at working precision.

    pivot_threshold: valuation bound for an acceptable pivot; defaults to
    half of the smallest precision present in the matrix.
    """
    m = [list(r) for r in rows]
    if not m or not m[0]:
        return 0
    if pivot_threshold is None:
        prec = min(x.precision for r in m for x in r)
        pivot_threshold = prec / 2
    rank = 0
    rows_left = list(range(len(m)))
    cols_left = list(range(len(m[0])))
    while rows_left and cols_left:
        best = None
        for ri in rows_left:
            for ci in cols_left:
                x = m[ri][ci]
                if x.is_zero():
                    continue
                if best is None or _val(x) < _val(m[best[0]][best[1]]):
                    best = (ri, ci)
        if best is None or _val(m[best[0]][best[1]]) >= pivot_threshold:
            break
        pr, pc = best
        pivot = m[pr][pc]
        for ri in rows_left:
            if ri == pr:
                continue
            x = m[ri][pc]
            if x.is_zero():
                continue
            factor = x / pivot
            for ci in cols_left:
                m[ri][ci] = m[ri][ci] - factor * m[pr][ci]
        rows_left.remove(pr)
        cols_left.remove(pc)
        rank += 1
    return rank


def solve_linear(matrix, rhs, pivot_threshold=None):
    """Solve M x = rhs over LocalFieldElements by valuation-pivoted elimination.

    matrix: list of rows; rhs: list.  Requires a square system.  Raises
    SingularSystem when no acceptable pivot exists for some column.
    """
    n = len(matrix)
    if any(len(r) != n for r in matrix) or len(rhs) != n:
        raise ValueError("need a square system with matching rhs")
    m = [list(r) + [rhs[i]] for i, r in enumerate(matrix)]
    if pivot_threshold is None:
        prec = min(x.precision for r in matrix for x in r if not x.is_exact_zero)
        pivot_threshold = prec / 2
    perm = []  # (row, col) pivot positions in elimination order
    rows_left = list(range(n))
    cols_left = list(range(n))
    for _ in range(n):
        best = None
        for ri in rows_left:
            for ci in cols_left:
                x = m[ri][ci]
                if x.is_zero():
                    continue
                if best is None or _val(x) < _val(m[best[0]][best[1]]):
                    best = (ri, ci)
        if best is None:
            raise SingularSystem("no nonzero pivot available")
        if _val(m[best[0]][best[1]]) >= pivot_threshold:
            raise SingularSystem(
                f"best pivot valuation {m[best[0]][best[1]].valuation} is "
                f"noise-level (threshold {pivot_threshold})")
        pr, pc = best
        pivot = m[pr][pc]
        # full Gauss-Jordan: clear the pivot column in every other row, so
        # that each pivot row ends up supported on its own pivot column only
        for ri in range(n):
            if ri == pr:
                continue
            x = m[ri][pc]
            if x.is_zero():
                continue
            factor = x / pivot
            for ci in range(n + 1):
                m[ri][ci] = m[ri][ci] - factor * m[pr][ci]
        perm.append((pr, pc))
        rows_left.remove(pr)
        cols_left.remove(pc)
    # back substitution is immediate: the eliminated matrix is diagonal on
    # the pivot positions
    xs = [None] * n
    for pr, pc in perm:
        xs[pc] = m[pr][n] / m[pr][pc]
    if any(x is None for x in xs):
        raise PrecisionExhausted("elimination left unsolved coordinates")
    return xs
