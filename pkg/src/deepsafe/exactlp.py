"""Exact rational feasibility of A x <= b over free variables.

Phase-1 simplex with Bland's rule on ``fractions.Fraction`` entries, so
termination is guaranteed and there is no floating-point ambiguity. Only
meant for the tiny systems a verification leaf produces; used to settle
leaves where the floating-point LP and the forward evaluation disagree.
"""

from __future__ import annotations

from fractions import Fraction


def _to_fraction_rows(A, b):
    rows = [[Fraction(v) for v in row] for row in A]
    rhs = [Fraction(v) for v in b]
    if any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("ragged constraint matrix")
    if len(rhs) != len(rows):
        raise ValueError("rhs length does not match row count")
    return rows, rhs


def solve_feasibility(A, b):
    """Decide whether ``A x <= b`` has a real solution, exactly.

    Returns ``(True, x)`` with a rational witness (list of Fraction) or
    ``(False, None)``. Entries of A and b may be ints, floats, or
    Fractions; floats are converted exactly.
    """
    rows, rhs = _to_fraction_rows(A, b)
    m = len(rows)
    n = len(rows[0]) if m else 0
    if m == 0:
        return True, [Fraction(0)] * n

    # Variables: x+ (n), x- (n), slack (m), artificial (one per negative-rhs
    # row). Standard form rows: A(x+ - x-) + s = b, with negative-rhs rows
    # negated and given an artificial basic variable.
    art_rows = [i for i in range(m) if rhs[i] < 0]
    n_art = len(art_rows)
    width = 2 * n + m + n_art
    tableau = []
    basis = []
    art_col = {}
    for j, i in enumerate(art_rows):
        art_col[i] = 2 * n + m + j
    for i in range(m):
        sign = -1 if rhs[i] < 0 else 1
        row = [Fraction(0)] * (width + 1)
        for j in range(n):
            row[j] = sign * rows[i][j]
            row[n + j] = -sign * rows[i][j]
        row[2 * n + i] = Fraction(sign)
        row[width] = sign * rhs[i]
        if i in art_col:
            row[art_col[i]] = Fraction(1)
            basis.append(art_col[i])
        else:
            basis.append(2 * n + i)
        tableau.append(row)

    # Phase-1 objective: minimize the sum of artificials. Reduced-cost row
    # starts as -(sum of artificial rows) restricted to non-basic columns.
    cost = [Fraction(0)] * (width + 1)
    for i in art_rows:
        for j in range(width + 1):
            cost[j] -= tableau[i][j]
    for j in range(2 * n + m, width):
        cost[j] = Fraction(0)  # basic artificial columns have zero reduced cost

    while True:
        enter = next((j for j in range(width) if cost[j] < 0), None)
        if enter is None:
            break
        ratios = [
            (tableau[i][width] / tableau[i][enter], i)
            for i in range(m)
            if tableau[i][enter] > 0
        ]
        if not ratios:
            raise ArithmeticError("phase-1 objective unbounded; malformed input")
        _, pivot_row = min(ratios, key=lambda t: (t[0], basis[t[1]]))
        _pivot(tableau, cost, basis, pivot_row, enter, width)

    if -cost[width] > 0:
        return False, None

    values = [Fraction(0)] * width
    for i, var in enumerate(basis):
        values[var] = tableau[i][width]
    x = [values[j] - values[n + j] for j in range(n)]
    return True, x


def _pivot(tableau, cost, basis, pivot_row, enter, width):
    m = len(tableau)
    pr = tableau[pivot_row]
    pivot = pr[enter]
    for j in range(width + 1):
        pr[j] = pr[j] / pivot
    for i in range(m):
        if i == pivot_row:
            continue
        factor = tableau[i][enter]
        if factor:
            row = tableau[i]
            for j in range(width + 1):
                row[j] -= factor * pr[j]
    factor = cost[enter]
    if factor:
        for j in range(width + 1):
            cost[j] -= factor * pr[j]
    basis[pivot_row] = enter
