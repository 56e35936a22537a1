"""Independent verification of flat output candidates and forward simulation.

A candidate flat output is verified symbolically by stacking its forward
shifts, solving for the system variables as functions of the output jets,
and checking the parametrization identity together with the submersion
property.  Numeric verification replays random output trajectories near
the equilibrium through the parametrization and measures the dynamics
residual.  A symbolic PASS is required for a certified result; the numeric
check only ever adds falsification power.
"""

from dataclasses import dataclass
import random
import re

import sympy as sp

from . import symbolic
from .errors import FlatcheckError, SimulationError

__all__ = [
    "jet_symbol",
    "parse_jet_symbol",
    "shift_function",
    "FlatParametrization",
    "Trajectory",
    "SymbolicVerification",
    "NumericTrial",
    "NumericVerification",
    "verify_flat_output_symbolic",
    "verify_flat_output_numeric",
    "simulate",
]

_JET_PATTERN = re.compile(r"^y(\d+)(?:_p(\d+))?$")


def jet_symbol(component, shift) -> sp.Symbol:
    """Symbol for forward shift ``shift`` of flat output component
    ``component`` (1-based)."""
    if shift == 0:
        return sp.Symbol("y%d" % component)
    return sp.Symbol("y%d_p%d" % (component, shift))


def parse_jet_symbol(sym):
    """Inverse of jet_symbol; returns (component, shift) or (None, None)."""
    match = _JET_PATTERN.match(sym.name)
    if match is None:
        return None, None
    return int(match.group(1)), int(match.group(2) or 0)


def input_shift_symbol(u: sp.Symbol, shift) -> sp.Symbol:
    """Symbol for forward shift ``shift`` of input u."""
    if shift == 0:
        return u
    return sp.Symbol("%s_p%d" % (u.name, shift))


def _parse_input_shift(sym, system):
    for u in system.inputs:
        if sym == u:
            return u, 0
        match = re.match("^" + re.escape(u.name) + r"_p(\d+)$", sym.name)
        if match is not None:
            return u, int(match.group(1))
    return None, None


def shift_function(g, system=None, count=1):
    """Forward shift operator on functions.

    With a system, states are substituted by the update expressions and
    every input shift is bumped by one.  Without a system the expression
    is read over the output jets and every jet shift is bumped.  Applied
    ``count`` times."""
    e = sp.sympify(g)
    for _ in range(count):
        mapping = {}
        if system is None:
            for sym in e.free_symbols:
                j, s = parse_jet_symbol(sym)
                if j is None:
                    raise FlatcheckError(
                        "output shift applies to jet expressions, got %s" % sym
                    )
                mapping[sym] = jet_symbol(j, s + 1)
        else:
            mapping.update({s: f for s, f in zip(system.states, system.update)})
            for sym in e.free_symbols:
                if sym in mapping:
                    continue
                base, s = _parse_input_shift(sym, system)
                if base is None:
                    raise FlatcheckError(
                        "system shift applies over states and input shifts, got %s"
                        % sym
                    )
                mapping[sym] = input_shift_symbol(base, s + 1)
        e = e.subs(mapping, simultaneous=True)
    return e


@dataclass(frozen=True)
class FlatParametrization:
    """Difference parametrization of the system trajectories.

    F_x expresses the states through output shifts up to order R-1, F_u
    the inputs through shifts up to order R; R is the per-component
    multi-index of highest shifts."""

    F_x: tuple
    F_u: tuple
    R: tuple

    @property
    def m(self) -> int:
        return len(self.R)


@dataclass(frozen=True)
class Trajectory:
    """Forward simulation record: states x(0..K), inputs u(0..K-1)."""

    horizon: int
    states: tuple
    inputs: tuple
    outputs: tuple = None


@dataclass(frozen=True)
class SymbolicVerification:
    status: str
    bound: int
    capped: bool
    detail: str


@dataclass(frozen=True)
class NumericTrial:
    index: int
    residual: float
    replay_error: float
    resamples: int


@dataclass(frozen=True)
class NumericVerification:
    status: str
    trials: int
    horizon: int
    tol: float
    seed: int
    box: float
    max_residual: float
    trial_records: tuple


def _equilibrium_jet_values(system, components, q):
    point = system.equilibrium_point()
    for u in system.inputs:
        for s in range(1, q + 2):
            point[input_shift_symbol(u, s)] = point[u]
    return [symbolic.evaluate_exact(c, point) for c in components]


def _jet_targets(m, bound):
    return [jet_symbol(j + 1, s) for s in range(bound + 1) for j in range(m)]


def _shift_ranks(F_x, F_u, m):
    """Multi-index R from the shifts appearing in a solved parametrization."""
    max_x = [None] * m
    max_u = [None] * m
    for exprs, store in ((F_x, max_x), (F_u, max_u)):
        for e in exprs:
            for sym in sp.sympify(e).free_symbols:
                j, s = parse_jet_symbol(sym)
                if j is None:
                    return None
                if store[j - 1] is None or s > store[j - 1]:
                    store[j - 1] = s
    R = []
    for j in range(m):
        candidates = [1]
        if max_u[j] is not None:
            candidates.append(max_u[j])
        if max_x[j] is not None:
            candidates.append(max_x[j] + 1)
        R.append(max(candidates))
    return tuple(R)


def check_parametrization(system, p: FlatParametrization):
    """Exact checks of a parametrization: the shifted state expressions
    reproduce the dynamics, the combined map is a generic submersion, and
    the states only use shifts below R.  Returns (ok, detail)."""
    subs_map = {s: e for s, e in zip(system.states, p.F_x)}
    subs_map.update({u: e for u, e in zip(system.inputs, p.F_u)})
    for i, s in enumerate(system.states):
        ahead = shift_function(p.F_x[i])
        through = sp.sympify(system.update[i]).subs(subs_map, simultaneous=True)
        if symbolic.is_zero(sp.cancel(sp.together(ahead - through))) is not True:
            return False, "dynamics identity fails for %s" % s
    jets = sorted(
        {sym for e in p.F_x + p.F_u for sym in sp.sympify(e).free_symbols},
        key=lambda s: s.name,
    )
    for sym in jets:
        if parse_jet_symbol(sym)[0] is None:
            return False, "parametrization contains non-jet symbol %s" % sym
    rows = [[sp.diff(e, s) for s in jets] for e in list(p.F_x) + list(p.F_u)]
    if symbolic.generic_rank(sp.Matrix(rows)) != system.n + system.m:
        return False, "parametrization is not a generic submersion"
    for i, e in enumerate(p.F_x):
        for sym in sp.sympify(e).free_symbols:
            j, s = parse_jet_symbol(sym)
            if s > p.R[j - 1] - 1:
                return False, "state %d uses shift %d of component %d" % (i + 1, s, j)
    return True, "identity, submersion, and shift bounds hold"


def _candidate_parts(system, candidate):
    """Component tuple and highest input shift of an output candidate.

    Accepts a FlatOutput-shaped object or a plain sequence of expressions
    over the states and input shifts; for the latter the shift order is
    read off the free symbols."""
    if hasattr(candidate, "components"):
        return (
            tuple(sp.sympify(c) for c in candidate.components),
            candidate.q,
        )
    comps = tuple(sp.sympify(c) for c in candidate)
    q = 0
    for e in comps:
        for sym in e.free_symbols:
            if sym in system.states:
                continue
            base, s = _parse_input_shift(sym, system)
            if base is None:
                raise FlatcheckError(
                    "candidate output uses unknown symbol %s" % sym
                )
            q = max(q, s)
    return comps, q


def verify_flat_output_symbolic(system, candidate):
    """Decide whether candidate components form a flat output.

    Stacks the forward shifts of the components up to an incrementally
    grown bound (capped at n + q + 1), solves for the system variables as
    functions of the output jets, and verifies the parametrization
    identity and the submersion property.  Returns (parametrization,
    report); the parametrization is None unless the status is PASS.  A
    generic functional relation among the stacked shifts is a proof of
    failure; a solver that gives up is only INCONCLUSIVE."""
    components, q = _candidate_parts(system, candidate)
    components = list(components)
    if len(components) != system.m:
        raise FlatcheckError(
            "candidate has %d components for %d inputs" % (len(components), system.m)
        )
    m, n = system.m, system.n
    cap = n + q + 1
    eq_point = system.equilibrium_point()
    centers = _equilibrium_jet_values(system, components, q)
    levels = [list(components)]
    detail = "no solvable shift bound up to %d" % cap
    for alpha in range(cap + 1):
        while len(levels) <= alpha:
            levels.append([shift_function(e, system) for e in levels[-1]])
        stacked = [e for level in levels[: alpha + 1] for e in level]
        targets = _jet_targets(m, alpha)
        shift_syms = []
        for u in system.inputs:
            for s in range(alpha + q + 1):
                shift_syms.append(input_shift_symbol(u, s))
        present = [
            s for s in shift_syms if any(e.has(s) for e in stacked)
        ]
        all_vars = list(system.states) + present
        jacobian = sp.Matrix([[sp.diff(e, v) for v in all_vars] for e in stacked])
        if symbolic.generic_rank(jacobian) < len(stacked):
            return None, SymbolicVerification(
                status="FAIL",
                bound=alpha,
                capped=False,
                detail="components satisfy a difference relation at shift bound %d"
                % alpha,
            )
        if len(stacked) < n + m:
            continue
        top = max(
            (_parse_input_shift(s, system)[1] for s in present), default=-1
        )
        ladders = []
        if top >= 0:
            trimmed = [
                s for s in present if _parse_input_shift(s, system)[1] < top
            ]
            ladders.append(list(system.states) + trimmed)
        ladders.append(list(system.states) + present)
        equations = [sp.Eq(t, e) for t, e in zip(targets, stacked)]
        result = None
        for unknowns in ladders:
            result = _attempt_jet_solve(
                system, equations, unknowns, centers, eq_point, q
            )
            if result is not None:
                break
        if result is None:
            detail = "stacked system unsolved at shift bound %d" % alpha
            continue
        F_x, F_u = result
        R = _shift_ranks(F_x, F_u, m)
        if R is None:
            detail = "solution retains non-jet symbols at shift bound %d" % alpha
            continue
        p = FlatParametrization(F_x=tuple(F_x), F_u=tuple(F_u), R=R)
        ok, why = check_parametrization(system, p)
        if ok:
            return p, SymbolicVerification(
                status="PASS", bound=alpha, capped=False, detail=why
            )
        detail = why + " at shift bound %d" % alpha
    return None, SymbolicVerification(
        status="INCONCLUSIVE", bound=cap, capped=True, detail=detail
    )


def _attempt_jet_solve(system, equations, unknowns, centers, eq_point, q):
    """Solve the stacked jet equations for the given unknowns and select the
    branch through the equilibrium.  Returns (F_x, F_u) with jet-pure
    expressions for every state and input, or None."""
    try:
        solutions = symbolic.solve_algebraic(equations, unknowns)
    except FlatcheckError:
        return None
    wanted = list(system.states) + list(system.inputs)
    jet_point = {}
    for j, c in enumerate(centers):
        for s in range(0, system.n + q + 3):
            jet_point[jet_symbol(j + 1, s)] = c
    for sol in solutions:
        if not all(v in sol for v in wanted):
            continue
        pure = True
        for v in wanted:
            for sym in sol[v].free_symbols:
                if parse_jet_symbol(sym)[0] is None:
                    pure = False
                    break
            if not pure:
                break
        if not pure:
            continue
        at_eq = True
        for v in wanted:
            try:
                value = symbolic.evaluate_exact(sol[v], jet_point)
            except ZeroDivisionError:
                at_eq = False
                break
            if sp.simplify(value - eq_point[v]) != 0:
                at_eq = False
                break
        if not at_eq:
            continue
        F_x = [sp.cancel(sp.together(sol[s])) for s in system.states]
        F_u = [sp.cancel(sp.together(sol[u])) for u in system.inputs]
        return F_x, F_u
    return None


def _sample_centers(system, comps, q):
    return [float(v) for v in _equilibrium_jet_values(system, list(comps), q)]


def verify_flat_output_numeric(
    system,
    p: FlatParametrization,
    trials=20,
    horizon=20,
    tol=1e-9,
    seed=0,
    box=0.1,
    candidate=None,
):
    """Replay random output trajectories through the parametrization.

    Each trial samples a y-trajectory componentwise uniform in a box
    around the equilibrium's output image, computes states and inputs via
    the parametrization, and measures the worst dynamics residual; when
    the candidate is supplied, the outputs are replayed and compared to
    the samples.  Trials are independent, seeded by (seed, index), and
    merged in index order, so reports are reproducible.  Pole hits
    resample the trial a bounded number of times."""
    m = p.m
    comps = None
    if candidate is not None:
        comps, q = _candidate_parts(system, candidate)
        centers = _sample_centers(system, comps, q)
    else:
        centers = [0.0] * m
        q = 0
    max_r = max(p.R)
    length = horizon + max_r + q + 2
    jets_used = sorted(
        {
            sym
            for e in list(p.F_x) + list(p.F_u)
            for sym in sp.sympify(e).free_symbols
        },
        key=lambda s: s.name,
    )
    fx_fns = [sp.lambdify(jets_used, e, modules="math") for e in p.F_x]
    fu_fns = [sp.lambdify(jets_used, e, modules="math") for e in p.F_u]
    sys_vars = list(system.states) + list(system.inputs)
    f_fns = [sp.lambdify(sys_vars, f, modules="math") for f in system.update]
    phi_fns = None
    if comps is not None:
        phi_vars = list(system.states) + [
            input_shift_symbol(u, s) for s in range(q + 1) for u in system.inputs
        ]
        phi_fns = [
            sp.lambdify(phi_vars, sp.sympify(c), modules="math") for c in comps
        ]

    def jet_values(samples, k):
        values = {}
        for sym in jets_used:
            j, s = parse_jet_symbol(sym)
            values[sym] = samples[j - 1][k + s]
        return [values[sym] for sym in jets_used]

    records = []
    for index in range(trials):
        rng = random.Random((seed << 32) ^ index)
        record = None
        for attempt in range(8):
            samples = [
                [centers[j] + rng.uniform(-box, box) for _ in range(length)]
                for j in range(m)
            ]
            try:
                xs = [
                    [fn(*jet_values(samples, k)) for fn in fx_fns]
                    for k in range(horizon + 1)
                ]
                us = [
                    [fn(*jet_values(samples, k)) for fn in fu_fns]
                    for k in range(horizon + q + 1)
                ]
                residual = 0.0
                for k in range(horizon):
                    nxt = [fn(*(xs[k] + us[k])) for fn in f_fns]
                    for a, b in zip(nxt, xs[k + 1]):
                        residual = max(residual, abs(a - b))
                replay = 0.0
                if phi_fns is not None:
                    for k in range(horizon):
                        args = list(xs[k])
                        for s in range(q + 1):
                            args.extend(us[k + s])
                        for j, fn in enumerate(phi_fns):
                            replay = max(replay, abs(fn(*args) - samples[j][k]))
                values = [v for row in xs + us for v in row] + [residual, replay]
                if any(v != v or abs(v) == float("inf") for v in values):
                    raise ZeroDivisionError("non-finite value")
                record = NumericTrial(
                    index=index,
                    residual=residual,
                    replay_error=replay,
                    resamples=attempt,
                )
                break
            except (ZeroDivisionError, OverflowError):
                continue
        if record is None:
            raise FlatcheckError(
                "numeric verification hit poles repeatedly in trial %d" % index
            )
        records.append(record)
    worst = max(
        (max(r.residual, r.replay_error) for r in records), default=0.0
    )
    status = "PASS" if all(
        r.residual <= tol and r.replay_error <= tol for r in records
    ) else "FAIL"
    return NumericVerification(
        status=status,
        trials=trials,
        horizon=horizon,
        tol=tol,
        seed=seed,
        box=box,
        max_residual=worst,
        trial_records=tuple(records),
    )


def simulate(system, x0, inputs) -> Trajectory:
    """Iterate the dynamics from x0 under the given input sequence.

    Evaluation is exact over the rationals when every value is rational,
    otherwise in floating point.  A pole aborts with the step index."""
    if len(x0) != system.n:
        raise SimulationError(
            "initial state has %d entries for %d states" % (len(x0), system.n)
        )
    rows = [list(r) for r in inputs]
    for row in rows:
        if len(row) != system.m:
            raise SimulationError(
                "input row has %d entries for %d inputs" % (len(row), system.m)
            )
    values = [sp.sympify(v) for v in list(x0) + [v for r in rows for v in r]]
    exact = all(v.is_Rational for v in values)
    sys_vars = list(system.states) + list(system.inputs)
    if exact:
        state = [sp.Rational(v) for v in x0]
        states = [tuple(state)]
        for k, row in enumerate(rows):
            point = {s: v for s, v in zip(system.states, state)}
            point.update({u: sp.Rational(v) for u, v in zip(system.inputs, row)})
            try:
                state = [
                    symbolic.evaluate_exact(f, point) for f in system.update
                ]
            except ZeroDivisionError:
                raise SimulationError("pole encountered at step %d" % k, step=k)
            states.append(tuple(state))
        input_rows = tuple(tuple(sp.Rational(v) for v in row) for row in rows)
    else:
        fns = [
            sp.lambdify(sys_vars, f, modules="math") for f in system.update
        ]
        state = [float(v) for v in x0]
        states = [tuple(state)]
        for k, row in enumerate(rows):
            args = state + [float(v) for v in row]
            try:
                state = [fn(*args) for fn in fns]
            except (ZeroDivisionError, OverflowError):
                raise SimulationError("pole encountered at step %d" % k, step=k)
            if any(v != v or abs(v) == float("inf") for v in state):
                raise SimulationError("pole encountered at step %d" % k, step=k)
            states.append(tuple(state))
        input_rows = tuple(tuple(float(v) for v in row) for row in rows)
    return Trajectory(
        horizon=len(rows),
        states=tuple(states),
        inputs=input_rows,
    )
