"""Differential geometry on the extended space of a discrete-time system.

The update map f makes the combined state-input space a fibred manifold
over the space of next states.  This module builds the adapted chart in
which f is a projection, transforms vector fields between charts, and
provides the operations the flatness test is made of: Lie brackets,
projectability tests, pushforwards, lifts, and the largest projectable
subdistribution of a given distribution.

Conventions.  Vector fields and distributions are plain component data
over an explicit coordinate tuple.  On the base space the coordinates
are the system variables (x, u); on the image space they are shifted
state symbols x<i>_p1.  All linear algebra runs over the field of
rational functions through the symbolic module, so every basis produced
here is deterministic.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import sympy as sp

from . import symbolic
from .errors import (
    ChartError,
    ConstantDimensionError,
    IndeterminateRankError,
    NotProjectableError,
)


def shifted_state_symbols(system) -> tuple:
    """Coordinates of the image space: one x<i>_p1 symbol per state."""
    return tuple(sp.Symbol("%s_p1" % s.name) for s in system.states)


@dataclass(frozen=True)
class VectorField:
    """Component vector over an ordered coordinate tuple."""

    coords: tuple
    components: tuple

    def __post_init__(self):
        if len(self.coords) != len(self.components):
            raise ValueError(
                "field has %d components for %d coordinates"
                % (len(self.components), len(self.coords))
            )

    def is_zero_field(self) -> bool:
        return all(symbolic.is_zero(c) is True for c in self.components)


@dataclass(frozen=True)
class Distribution:
    """Span of finitely many vector fields over a common coordinate tuple.

    The basis is kept independent over the function field, so the
    dimension is just the number of basis fields.  witness_rows, when
    present, are extra denominator-free component rows spanning the
    same distribution generically; they allow rank evaluations at
    points where the preferred basis has poles.
    """

    coords: tuple
    fields: tuple
    witness_rows: tuple = ()

    def __post_init__(self):
        for f in self.fields:
            if f.coords != self.coords:
                raise ValueError("basis field over foreign coordinates")

    @property
    def dim(self) -> int:
        return len(self.fields)

    def component_matrix(self) -> sp.Matrix:
        if not self.fields:
            return sp.zeros(0, len(self.coords))
        return sp.Matrix([list(f.components) for f in self.fields])

    def witness_matrix(self) -> sp.Matrix:
        """Pole-free rows spanning the distribution, for point evaluation."""
        rows = [list(r) for r in self.witness_rows]
        for f in self.fields:
            rows.append(symbolic.clear_denominators(list(f.components)))
        rows = [r for r in rows if any(symbolic.is_zero(e) is not True for e in r)]
        if not rows:
            return sp.zeros(0, len(self.coords))
        return sp.Matrix(rows)


def make_distribution(coords, rows) -> Distribution:
    """Build a distribution from component rows, dropping dependent ones.

    Rows are reduced to echelon form and cleared to primitive polynomial
    vectors, which makes the stored basis canonical for the span.
    """
    rows = [list(r) for r in rows]
    rows = [r for r in rows if any(symbolic.is_zero(e) is not True for e in r)]
    if not rows:
        return Distribution(coords=tuple(coords), fields=())
    res = symbolic.function_field_rref(sp.Matrix(rows), var_order=tuple(coords))
    basis = []
    for i in range(len(res.pivots)):
        row = [res.rref[i, j] for j in range(len(coords))]
        basis.append(VectorField(tuple(coords), tuple(symbolic.clear_denominators(row))))
    return Distribution(coords=tuple(coords), fields=tuple(basis))


@dataclass(frozen=True)
class Chart:
    """Adapted chart (theta, xi) with stored forward and inverse maps.

    forward maps each chart symbol to its expression in the base
    variables; inverse maps each base variable back.  xi_choice records
    which base coordinates serve as the fibre coordinates xi.
    """

    system_vars: tuple
    theta: tuple
    xi: tuple
    forward: dict
    inverse: dict
    xi_choice: tuple

    @property
    def coords(self) -> tuple:
        return tuple(self.theta) + tuple(self.xi)

    def equilibrium_image(self, point) -> dict:
        """Chart coordinates of a base-space point."""
        return {
            c: symbolic.evaluate_exact(self.forward[c], point) for c in self.coords
        }


def build_adapted_chart(system) -> Chart:
    """Adapted chart: theta = f(x, u) plus m fibre coordinates xi.

    The fibre coordinates are picked greedily from the declared
    variables, states before inputs, keeping the stacked Jacobian of
    (f, xi) regular both generically and at the equilibrium.  The
    inverse map is computed symbolically and the branch through the
    equilibrium is selected.
    """
    n, m = system.n, system.m
    variables = system.variables
    point = system.equilibrium_point()

    theta = tuple(sp.Symbol("theta_%d" % (i + 1)) for i in range(n))
    xi = tuple(sp.Symbol("xi_%d" % (j + 1)) for j in range(m))

    rows = [
        [symbolic.canonicalize(sp.diff(fi, v)) for v in variables]
        for fi in system.update
    ]
    chosen: list = []
    for candidate in variables:
        if len(chosen) == m:
            break
        grad = [sp.Integer(1) if v == candidate else sp.Integer(0) for v in variables]
        trial = sp.Matrix(rows + [list(c) for c in chosen] + [grad])
        want = n + len(chosen) + 1
        if symbolic.generic_rank(trial) < want:
            continue
        if symbolic.rank_at_point(trial, point) < want:
            continue
        chosen.append(tuple(grad))
    if len(chosen) < m:
        raise ChartError(
            "no %d coordinate functions complete f to a regular chart" % m
        )
    xi_choice = tuple(
        variables[next(i for i, g in enumerate(c) if g == 1)] for c in chosen
    )

    forward = {theta[i]: system.update[i] for i in range(n)}
    forward.update({xi[j]: xi_choice[j] for j in range(m)})
    equations = [sp.Eq(c, forward[c]) for c in tuple(theta) + tuple(xi)]
    solutions = symbolic.solve_algebraic(equations, list(variables))
    if not solutions:
        raise ChartError(
            "chart inversion failed for xi = %s" % (tuple(map(str, xi_choice)),)
        )

    image = {
        c: symbolic.evaluate_exact(forward[c], point)
        for c in tuple(theta) + tuple(xi)
    }
    inverse = None
    for sol in solutions:
        if set(sol) != set(variables):
            continue
        try:
            ok = all(
                symbolic.evaluate_exact(sol[v], image) == point[v] for v in variables
            )
        except ZeroDivisionError:
            ok = False
        if ok:
            inverse = {v: symbolic.canonicalize(sol[v]) for v in variables}
            break
    if inverse is None:
        raise ChartError(
            "no inverse branch passes through the equilibrium (xi = %s)"
            % (tuple(map(str, xi_choice)),)
        )

    for c in tuple(theta) + tuple(xi):
        residual = symbolic.canonicalize(
            forward[c].subs(inverse, simultaneous=True) - c
        )
        if symbolic.is_zero(residual) is not True:
            raise ChartError("chart maps do not invert: residual %s on %s"
                             % (residual, c))
    return Chart(
        system_vars=tuple(variables),
        theta=theta,
        xi=xi,
        forward=forward,
        inverse=inverse,
        xi_choice=xi_choice,
    )


def transform_vector_field(v: VectorField, chart: Chart) -> VectorField:
    """Rewrite a field given over the base variables in chart coordinates."""
    if v.coords != chart.system_vars:
        raise ValueError("field is not over the chart's base variables")
    new_components = []
    for c in chart.coords:
        expr = chart.forward[c]
        comp = sp.Integer(0)
        for var, vc in zip(v.coords, v.components):
            if symbolic.is_zero(vc) is True:
                continue
            comp = comp + sp.diff(expr, var) * vc
        comp = sp.cancel(sp.together(comp))
        comp = sp.cancel(comp.subs(chart.inverse, simultaneous=True))
        new_components.append(comp)
    return VectorField(chart.coords, tuple(new_components))


def lie_bracket(v1: VectorField, v2: VectorField) -> VectorField:
    """Standard Lie bracket of two fields over the same coordinates."""
    if v1.coords != v2.coords:
        raise ValueError("bracket of fields over different coordinates")
    coords = v1.coords
    comps = []
    for i in range(len(coords)):
        term = sp.Integer(0)
        for j in range(len(coords)):
            term = term + v1.components[j] * sp.diff(v2.components[i], coords[j])
            term = term - v2.components[j] * sp.diff(v1.components[i], coords[j])
        comps.append(sp.cancel(sp.together(term)))
    return VectorField(coords, tuple(comps))


def is_projectable(v: VectorField, system, chart: Chart):
    """Whether the field pushes forward to a well-defined field.

    True iff every theta component, written in the adapted chart, is
    free of all fibre coordinates xi.  Returns None when a zero test is
    undecidable.
    """
    ad = transform_vector_field(v, chart)
    undecided = False
    for i in range(system.n):
        for x in chart.xi:
            z = symbolic.is_zero(sp.diff(ad.components[i], x))
            if z is False:
                return False
            if z is None:
                undecided = True
    return None if undecided else True


def pushforward_vector_field(v: VectorField, system, chart: Chart) -> VectorField:
    """Image of a projectable field: theta components renamed to x+."""
    ad = transform_vector_field(v, chart)
    for i in range(system.n):
        for x in chart.xi:
            z = symbolic.is_zero(sp.diff(ad.components[i], x))
            if z is None:
                raise IndeterminateRankError(
                    "cannot decide projectability of component %d" % (i + 1)
                )
            if z is False:
                raise NotProjectableError(
                    "field is not projectable: component %s depends on %s"
                    % (ad.components[i], x)
                )
    xplus = shifted_state_symbols(system)
    rename = dict(zip(chart.theta, xplus))
    comps = tuple(
        sp.cancel(ad.components[i].subs(rename, simultaneous=True))
        for i in range(system.n)
    )
    return VectorField(xplus, comps)


def is_involutive(dist: Distribution) -> bool:
    """Whether all pairwise brackets of the basis stay in the span."""
    if dist.dim <= 1:
        return True
    M = dist.component_matrix()
    base_rank = symbolic.generic_rank(M)
    for a, b in itertools.combinations(range(dist.dim), 2):
        br = lie_bracket(dist.fields[a], dist.fields[b])
        if br.is_zero_field():
            continue
        stacked = sp.Matrix([M, sp.Matrix([list(br.components)])])
        if symbolic.generic_rank(stacked) > base_rank:
            return False
    return True


def contains_field(dist: Distribution, v: VectorField) -> bool:
    """Membership of a field in the span of a distribution."""
    if v.is_zero_field():
        return True
    if dist.dim == 0:
        return False
    M = dist.component_matrix()
    stacked = sp.Matrix([M, sp.Matrix([list(v.components)])])
    return symbolic.generic_rank(stacked) == symbolic.generic_rank(M)


def contains_distribution(outer: Distribution, inner: Distribution) -> bool:
    return all(contains_field(outer, f) for f in inner.fields)


def _theta_block(fields_adapted, n) -> list:
    return [[f.components[i] for i in range(n)] for f in fields_adapted]


def _reduce_mod_rows(row, reduced_rows, pivots):
    """Residual of a row modulo an echelon row set."""
    row = [sp.cancel(e) for e in row]
    for r, pc in zip(reduced_rows, pivots):
        fac = row[pc]
        if symbolic.is_zero(fac) is True:
            continue
        row = [sp.cancel(row[k] - fac * r[k]) for k in range(len(row))]
    return row


def largest_projectable_subdistribution(
    dist: Distribution, system, chart: Chart
) -> Distribution:
    """The unique largest subdistribution that pushes forward under f.

    Descending iteration: starting from the full distribution, keep the
    fields whose brackets with every fibre direction stay inside the
    current candidate plus the vertical distribution.  Each refinement
    is one kernel computation over the function field, because the
    derivative terms of the brackets stay in the candidate by linearity.
    At the fixed point, a projectable basis is extracted through the
    echelon form of the theta block, and rechecked field by field.
    """
    n = system.n
    if dist.dim == 0:
        return dist
    if not is_involutive(dist):
        warnings.warn(
            "largest projectable subdistribution of a non-involutive "
            "distribution; the result is the bracket-stable core",
            stacklevel=2,
        )

    cur = [VectorField(dist.coords, f.components) for f in dist.fields]
    while cur:
        adapted = [transform_vector_field(f, chart) for f in cur]
        theta_rows = _theta_block(adapted, n)
        nonzero = [
            r for r in theta_rows
            if any(symbolic.is_zero(e) is not True for e in r)
        ]
        if nonzero:
            res = symbolic.function_field_rref(
                sp.Matrix(nonzero), var_order=chart.coords
            )
            reduced = [
                [res.rref[i, j] for j in range(n)] for i in range(len(res.pivots))
            ]
            pivots = list(res.pivots)
        else:
            reduced, pivots = [], []

        residual_rows = []
        for x in chart.xi:
            for f in adapted:
                g = [sp.cancel(sp.diff(f.components[i], x)) for i in range(n)]
                residual_rows.append(_reduce_mod_rows(g, reduced, pivots))

        K = sp.Matrix(
            [
                [residual_rows[j * len(cur) + a][i] for j in range(len(chart.xi))
                 for i in range(n)]
                for a in range(len(cur))
            ]
        )
        kernel = symbolic.nullspace(K.T)
        if len(kernel) == len(cur):
            break
        new_cur = []
        for vec in kernel:
            comps = [
                sp.cancel(
                    sp.together(
                        sum(vec[a] * cur[a].components[k] for a in range(len(cur)))
                    )
                )
                for k in range(len(dist.coords))
            ]
            comps = symbolic.clear_denominators(comps)
            new_cur.append(VectorField(dist.coords, tuple(comps)))
        cur = new_cur

    if not cur:
        return Distribution(coords=dist.coords, fields=())

    # Extraction: echelon-reduce the theta block with an identity block
    # alongside, so the transform rows recombine the basis into fields
    # with xi-free theta components (top rows) and vertical fields
    # (zero-theta rows).
    adapted = [transform_vector_field(f, chart) for f in cur]
    aug = sp.Matrix(
        [
            [adapted[a].components[i] for i in range(n)]
            + [sp.Integer(1) if b == a else sp.Integer(0) for b in range(len(cur))]
            for a in range(len(cur))
        ]
    )
    res = symbolic.function_field_rref(aug, var_order=chart.coords)
    out_fields = []
    for r in range(len(cur)):
        coeffs = [res.rref[r, n + a] for a in range(len(cur))]
        comps = [
            sp.cancel(
                sp.together(
                    sum(coeffs[a] * cur[a].components[k] for a in range(len(cur)))
                )
            )
            for k in range(len(dist.coords))
        ]
        # Rescaling a field by a coordinate-dependent factor changes its
        # theta components' xi-derivatives, so denominators may only be
        # cleared on vertical rows, whose theta block is zero anyway.
        theta_zero = all(
            symbolic.is_zero(res.rref[r, i]) is True for i in range(n)
        )
        if theta_zero:
            comps = symbolic.clear_denominators(comps)
        out_fields.append(VectorField(dist.coords, tuple(comps)))

    witness = tuple(
        tuple(symbolic.clear_denominators(list(f.components))) for f in cur
    )
    result = Distribution(
        coords=dist.coords, fields=tuple(out_fields), witness_rows=witness
    )
    for f in result.fields:
        verdict = is_projectable(f, system, chart)
        if verdict is None:
            raise IndeterminateRankError(
                "projectability of an extracted basis field is undecidable"
            )
        if verdict is False:
            raise NotProjectableError(
                "projectable basis extraction failed: %s" % (f.components,)
            )

    point = system.equilibrium_point()
    W = result.witness_matrix()
    if W.rows:
        rank_eq = symbolic.rank_at_point(W, point)
        if rank_eq != result.dim:
            raise ConstantDimensionError(
                "projectable subdistribution has dimension %d generically "
                "but %d at the equilibrium" % (result.dim, rank_eq)
            )
    return result


def pushforward_distribution(dist: Distribution, system, chart: Chart) -> Distribution:
    """Span of the basis pushforwards on the image space.

    The image dimension may drop.  The span must still have the same
    dimension at the equilibrium image as generically, otherwise the
    constant-dimension assumption underlying the whole analysis fails.
    That is checked twice: on the pushed component rows themselves, and
    pointwise through the update Jacobian at the equilibrium, which
    catches drops that a rescaled basis would hide.
    """
    xplus = shifted_state_symbols(system)
    if dist.dim == 0:
        return Distribution(coords=xplus, fields=())
    rows = []
    for f in dist.fields:
        w = pushforward_vector_field(f, system, chart)
        rows.append(symbolic.clear_denominators(list(w.components)))
    rows = [r for r in rows if any(symbolic.is_zero(e) is not True for e in r)]
    if not rows:
        return Distribution(coords=xplus, fields=())

    point = system.equilibrium_point()
    image_point = {
        xp: symbolic.evaluate_exact(fi, point)
        for xp, fi in zip(xplus, system.update)
    }
    M = sp.Matrix(rows)
    generic = symbolic.generic_rank(M)
    at_eq = symbolic.rank_at_point(M, image_point)
    if at_eq < generic:
        raise ConstantDimensionError(
            "pushforward has dimension %d generically but %d at the "
            "equilibrium image" % (generic, at_eq)
        )

    jac_eq = sp.Matrix(
        [
            [symbolic.evaluate_exact(system.jacobian()[i, j], point)
             for j in range(system.n + system.m)]
            for i in range(system.n)
        ]
    )
    W = dist.witness_matrix()
    image_rows = []
    for a in range(W.rows):
        vec = sp.Matrix(
            [[symbolic.evaluate_exact(W[a, j], point)] for j in range(W.cols)]
        )
        image_rows.append(list((jac_eq * vec).T))
    pointwise = sp.Matrix(image_rows).rank() if image_rows else 0
    if pointwise != generic:
        raise ConstantDimensionError(
            "pushforward has dimension %d generically but %d at the "
            "equilibrium image" % (generic, pointwise)
        )
    return make_distribution(xplus, rows)


def lift_distribution(delta: Distribution, system) -> Distribution:
    """Preimage of an image-space distribution under the projection.

    Renames x+ back to x, pads with zero input components, and adjoins
    the full input directions, so the dimension grows by m.
    """
    variables = system.variables
    xplus = shifted_state_symbols(system)
    rename = dict(zip(xplus, system.states))
    n, m = system.n, system.m
    fields = []
    for f in delta.fields:
        comps = [
            sp.cancel(c.subs(rename, simultaneous=True)) for c in f.components
        ] + [sp.Integer(0)] * m
        fields.append(VectorField(tuple(variables), tuple(comps)))
    for j in range(m):
        comps = [sp.Integer(0)] * (n + j) + [sp.Integer(1)] + [sp.Integer(0)] * (
            m - j - 1
        )
        fields.append(VectorField(tuple(variables), tuple(comps)))
    return Distribution(coords=tuple(variables), fields=tuple(fields))
