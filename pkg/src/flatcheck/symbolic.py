"""Exact symbolic arithmetic over rational function fields.

Everything downstream manipulates rational expressions in the system
variables with exact rational coefficients.  This module pins down the
canonical form, the three-valued zero test, equation solving, and a
row-reduction routine over the function field with deterministic pivoting.
All functions are pure; sympy expressions are immutable.

Expressions built from opaque analytic functions (sin, exp, undefined
functions) are carried along, but zero tests on them may return None
("unknown") and rank decisions will refuse to guess.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Optional, Sequence

import sympy as sp

from .errors import (
    InconsistentSystemError,
    IndeterminateRankError,
    UnsupportedEquationError,
)

# Contract aliases: the substrate is sympy behind these names.
SymbolicExpression = sp.Expr
SymbolicMatrix = sp.Matrix


def sympify_rational(value):
    """Convert strings/numbers to exact sympy values (floats become Rationals)."""
    e = sp.sympify(value, rational=True)
    return e


def free_variables(e) -> tuple:
    """Free symbols of ``e`` sorted by name, for deterministic iteration."""
    return tuple(sorted(sp.sympify(e).free_symbols, key=lambda s: s.name))


def is_rational_expression(e, variables: Optional[Sequence[sp.Symbol]] = None) -> bool:
    """True when ``e`` is a rational function of ``variables`` (default: all
    of its free symbols) with exact rational coefficients."""
    e = sp.sympify(e)
    if variables is None:
        variables = free_variables(e)
    if not variables:
        return bool(e.is_Number and e.is_rational)
    if not e.is_rational_function(*variables):
        return False
    # everything must stay exact, so float coefficients are rejected
    return not e.has(sp.Float)


def canonical_pair(e, var_order: Optional[Sequence[sp.Symbol]] = None):
    """Normalized (numerator, denominator) pair of a rational expression.

    The fraction is cancelled to lowest terms, both parts expanded, and the
    sign fixed so the numerator's leading coefficient is positive under
    graded-lexicographic monomial order over ``var_order`` (default: free
    symbols sorted by name).
    """
    e = sp.together(sp.sympify(e))
    e = sp.cancel(e)
    num, den = sp.fraction(e)
    num = sp.expand(num)
    den = sp.expand(den)
    if num == 0:
        return sp.Integer(0), sp.Integer(1)
    gens = list(var_order) if var_order else list(free_variables(num))
    gens = [g for g in gens if num.has(g)]
    if gens:
        try:
            poly = sp.Poly(num, *gens)
            lead_mon = poly.monoms(order="grlex")[0]
            lead = poly.coeff_monomial(lead_mon)
        except sp.PolynomialError:
            lead = None
    else:
        lead = num
    if lead is not None and lead.is_number and lead.is_negative:
        num, den = sp.expand(-num), sp.expand(-den)
    return num, den


def canonicalize(e, var_order: Optional[Sequence[sp.Symbol]] = None):
    """Canonical form of a rational expression (see :func:`canonical_pair`).

    Non-rational expressions are returned after best-effort simplification.
    """
    e = sp.sympify(e)
    variables = free_variables(e)
    if variables and not e.is_rational_function(*variables):
        return sp.simplify(e)
    num, den = canonical_pair(e, var_order)
    if den == 1:
        return num
    return num / den


def canonical_size(e) -> int:
    """Structural size used for pivot tie-breaking (operation count)."""
    return int(sp.count_ops(canonicalize(e)))


def is_zero(e) -> Optional[bool]:
    """Three-valued zero test: True / False / None (undecided).

    Decisive for rational expressions (exact cancellation); best-effort
    simplification otherwise, never guessing.
    """
    e = sp.sympify(e)
    if e.is_Number:
        return bool(e == 0)
    variables = free_variables(e)
    if e.is_rational_function(*variables) and not e.has(sp.Float):
        return sp.cancel(sp.together(e)) == 0
    s = sp.simplify(e)
    if s == 0:
        return True
    if s.is_Number:
        return bool(s == 0)
    z = s.is_zero
    if z is True:
        return True
    if z is False:
        return False
    return None


def differentiate(e, var: sp.Symbol, var_order=None):
    """Partial derivative, returned in canonical form when rational.

    Opaque functions differentiate to formal ``Derivative`` objects via the
    chain rule, exactly as sympy defines them.
    """
    d = sp.diff(sp.sympify(e), var)
    if d.has(sp.Derivative):
        return d
    return canonicalize(d, var_order)


def solve_algebraic(equations: Iterable, unknowns: Sequence[sp.Symbol]):
    """Solve rational equations exactly for ``unknowns``.

    Returns a list of solution dicts (empty when no symbolic solution was
    found, which is weaker than "no solution exists").  Raises
    InconsistentSystemError for a provable contradiction and
    UnsupportedEquationError when an equation depends non-rationally on one
    of the unknowns.
    """
    unknowns = list(unknowns)
    exprs = []
    for eq in equations:
        e = eq.lhs - eq.rhs if isinstance(eq, sp.Equality) else sp.sympify(eq)
        for u in unknowns:
            if e.has(u) and not e.is_rational_function(u):
                raise UnsupportedEquationError(
                    "equation %s depends non-rationally on %s" % (e, u)
                )
        residual = sp.cancel(sp.together(e))
        if not residual.free_symbols and residual != 0:
            raise InconsistentSystemError(
                "equation %s = 0 is a contradiction" % residual
            )
        if residual != 0:
            exprs.append(residual)
    if not exprs:
        # every equation was an identity: no constraints on the unknowns
        return [{}]
    try:
        sols = sp.solve(exprs, unknowns, dict=True)
    except NotImplementedError:
        return []
    return sols


class RrefResult(NamedTuple):
    rref: sp.Matrix
    pivots: tuple
    nullspace: list
    transform: sp.Matrix


def _as_matrix(M) -> sp.Matrix:
    return M if isinstance(M, sp.MatrixBase) else sp.Matrix(M)


def function_field_rref(M, var_order=None) -> RrefResult:
    """Reduced row echelon form over the rational function field.

    Deterministic pivoting: leftmost nonzero column; among candidate rows
    the one with the smallest canonical expression size, ties broken by row
    index.  The result additionally carries the pivot columns, a nullspace
    basis (one column vector per free column), and the row transform T with
    T * M == rref.  Raises IndeterminateRankError when a pivot candidate's
    zero test is undecided.
    """
    A = _as_matrix(M)
    nrows, ncols = A.shape
    work = [[sp.cancel(A[i, j]) for j in range(ncols)] for i in range(nrows)]
    trans = [
        [sp.Integer(1) if i == j else sp.Integer(0) for j in range(nrows)]
        for i in range(nrows)
    ]
    pivots = []
    r = 0
    for c in range(ncols):
        if r >= nrows:
            break
        candidates = []
        for i in range(r, nrows):
            z = is_zero(work[i][c])
            if z is None:
                raise IndeterminateRankError(
                    "cannot decide whether entry (%d, %d) = %s is zero"
                    % (i, c, work[i][c])
                )
            if z is False:
                candidates.append(i)
        if not candidates:
            continue
        candidates.sort(key=lambda i: (canonical_size(work[i][c]), i))
        i = candidates[0]
        work[r], work[i] = work[i], work[r]
        trans[r], trans[i] = trans[i], trans[r]
        pivot = work[r][c]
        work[r] = [sp.cancel(e / pivot) for e in work[r]]
        trans[r] = [sp.cancel(e / pivot) for e in trans[r]]
        for j in range(nrows):
            if j == r:
                continue
            factor = work[j][c]
            if is_zero(factor) is False:
                work[j] = [
                    sp.cancel(work[j][k] - factor * work[r][k]) for k in range(ncols)
                ]
                trans[j] = [
                    sp.cancel(trans[j][k] - factor * trans[r][k]) for k in range(nrows)
                ]
        pivots.append(c)
        r += 1
    rrefM = sp.Matrix(work) if nrows else sp.Matrix(0, ncols, [])
    null_vectors = []
    free_cols = [c for c in range(ncols) if c not in pivots]
    for fc in free_cols:
        v = [sp.Integer(0)] * ncols
        v[fc] = sp.Integer(1)
        for row_idx, pc in enumerate(pivots):
            v[pc] = sp.cancel(-work[row_idx][fc])
        null_vectors.append(sp.Matrix(ncols, 1, v))
    T = sp.Matrix(trans) if nrows else sp.Matrix(0, 0, [])
    return RrefResult(rrefM, tuple(pivots), null_vectors, T)


def generic_rank(M, var_order=None) -> int:
    """Rank over the function field (rank at a generic point)."""
    return len(function_field_rref(M, var_order).pivots)


def nullspace(M, var_order=None) -> list:
    """Right nullspace basis over the function field."""
    return function_field_rref(M, var_order).nullspace


def evaluate_exact(e, point: dict):
    """Evaluate a rational expression at an exact rational point.

    Raises ZeroDivisionError when the point is a pole.
    """
    num, den = canonical_pair(e)
    den_val = den.subs(point)
    if den_val == 0:
        raise ZeroDivisionError("pole at %s in %s" % (point, e))
    num_val = num.subs(point)
    return sp.cancel(num_val / den_val)

def rank_at_point(M, point: dict) -> int:
    """Exact rank of a matrix of rational expressions at a rational point."""
    A = _as_matrix(M)
    vals = A.applyfunc(lambda e: evaluate_exact(e, point))
    return vals.rank()


def clear_denominators(row: Sequence) -> list:
    """Scale a row of rational expressions to an integer-primitive polynomial
    row with the first nonzero coefficient positive.  The span is unchanged
    away from the cleared denominator's zero set."""
    exprs = [sp.cancel(e) for e in row]
    dens = [canonical_pair(e)[1] for e in exprs]
    common = sp.Integer(1)
    for d in dens:
        common = sp.lcm(common, d)
    cleared = [sp.expand(sp.cancel(e * common)) for e in exprs]
    nonzero = [e for e in cleared if e != 0]
    if not nonzero:
        return cleared
    content = None
    for e in nonzero:
        try:
            c = sp.Poly(e, *free_variables(e)).content() if e.free_symbols else abs(e)
        except sp.PolynomialError:
            c = sp.Integer(1)
        content = c if content is None else sp.gcd(content, c)
    if content not in (None, 0, 1):
        cleared = [sp.cancel(e / content) for e in cleared]
    first = next(e for e in cleared if e != 0)
    lead_negative = False
    if first.is_Number:
        lead_negative = bool(first.is_negative)
    else:
        gens = list(free_variables(first))
        try:
            poly = sp.Poly(first, *gens)
            lead = poly.coeff_monomial(poly.monoms(order="grlex")[0])
            lead_negative = bool(lead.is_number and lead.is_negative)
        except sp.PolynomialError:
            lead_negative = False
    if lead_negative:
        cleared = [sp.expand(-e) for e in cleared]
    return cleared


def to_infix(e) -> str:
    """Canonical infix string of the model grammar (powers written with ^)."""
    return sp.sstr(canonicalize(e)).replace("**", "^")
