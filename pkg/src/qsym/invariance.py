"""Lie and Q-conditional invariance residuals and determining systems."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import sympy as sp
from sympy.core.function import AppliedUndef

from .expr import (
    ClosureError,
    ContextError,
    JetContext,
    MultiIndex,
    QsymError,
    collect_coefficients,
    is_zero,
    normalize,
    substitute,
    total_derivative,
)
from .operators import (
    InvolutiveSet,
    VectorField,
    lie_bracket,
    prolong,
    apply_prolonged,
)

__all__ = [
    "PdeSystem",
    "FunctionConstraint",
    "DeterminingSystem",
    "SurfaceError",
    "lie_residual",
    "is_lie_symmetry",
    "surface_rules",
    "qcond_residual",
    "is_qcond_symmetry",
    "m_residual",
    "qcond_determining_system",
    "lie_determining_system",
    "check_algebra_closure",
    "canonical_equation",
    "solve_for_jet",
    "determining_to_system",
    "to_jets",
    "from_jets",
    "induced_operator",
]


class SurfaceError(QsymError):
    """Invariant surface conditions cannot be solved for distinct derivatives."""


@dataclass
class PdeSystem:
    """Equations ``leading = rhs`` in solved form over one context."""

    ctx: JetContext
    equations: list  # [(leading jet symbol, rhs)]
    name: str = ""

    def __post_init__(self):
        eqs = []
        for lead, rhs in self.equations:
            info = self.ctx.jet_info(lead)
            if info is None or info[1].order == 0:
                raise ContextError(f"leading term {lead} is not a derivative jet")
            rhs = normalize(rhs)
            j, alpha = info
            for s in self.ctx.jets_in(rhs):
                jj, beta = self.ctx.jet_info(s)
                if jj == j and beta.dominates(alpha):
                    raise ContextError(f"right-hand side of {lead} contains {s}")
            eqs.append((lead, rhs))
        self.equations = eqs

    @classmethod
    def from_expression(cls, ctx: JetContext, expr, lead=None, name: str = "") -> "PdeSystem":
        """Solve ``expr = 0`` for ``lead`` (or a preferred linear jet)."""
        lead, rhs = solve_for_jet(ctx, expr, lead)
        return cls(ctx, [(lead, rhs)], name)

    @property
    def order(self) -> int:
        return max(max(self.ctx.order(l), self.ctx.order(r)) for l, r in self.equations)

    @property
    def q(self) -> int:
        return len(self.equations)

    def expressions(self) -> list:
        return [normalize(l - r) for l, r in self.equations]

    def rules(self) -> dict:
        return dict(self.equations)


@dataclass(frozen=True)
class FunctionConstraint:
    """``f_{alpha} = rhs`` for an unknown function ``f``, applied with all consequences.

    ``alpha`` is a tuple of argument symbols to differentiate by, e.g. ``(t,)``.
    """

    name: str
    alpha: tuple
    rhs: sp.Expr

    def _counts(self, args):
        return MultiIndex(sum(1 for a in self.alpha if a == s) for s in args)

    def apply(self, e) -> sp.Expr:
        e = sp.sympify(e)
        for _ in range(64):
            repl = {}
            for d in e.atoms(sp.Derivative):
                f = d.expr
                if not (isinstance(f, AppliedUndef) and f.func.__name__ == self.name):
                    continue
                args = f.args
                have = MultiIndex(sum(c for v, c in d.variable_count if v == s) for s in args)
                lead = self._counts(args)
                if have.dominates(lead):
                    rest = have - lead
                    steps = [(args[i], c) for i, c in enumerate(rest) if c]
                    repl[d] = sp.diff(self.rhs, *steps) if steps else self.rhs
            if not repl:
                return normalize(e)
            e = e.xreplace(repl)
        raise ClosureError(f"constraint on {self.name} does not terminate")


def _apply_constraints(e, constraints):
    for c in constraints:
        e = c.apply(e)
    return normalize(e)


def solve_for_jet(ctx: JetContext, expr, lead=None):
    """Solve ``expr = 0`` for one jet that occurs linearly.

    Without ``lead``, picks the linear jet with the lexicographically
    greatest multiindex (so ``u_t`` beats ``u_xx`` for variables ``(t, x)``).
    """
    expr = normalize(expr)
    num, _ = sp.fraction(expr)
    num = sp.expand(num)
    jets = ctx.jets_in(num, min_order=1)
    if lead is not None:
        candidates = [lead] if lead in jets else []
    else:
        candidates = sorted(
            jets,
            key=lambda s: (tuple(ctx.jet_info(s)[1]), str(s)),
            reverse=True,
        )
    for s in candidates:
        if sp.degree(num, s) != 1:
            continue
        coeff = normalize(num.coeff(s, 1))
        rest = normalize(num - coeff * s)
        if is_zero(coeff) or s in coeff.free_symbols:
            continue
        return s, normalize(-rest / coeff)
    raise ContextError(f"cannot solve {expr} = 0 for a derivative appearing linearly")


def _check_principal_free(ctx, residual, rules, what):
    leading = [ctx.jet_info(l) for l in rules]
    for s in ctx.jets_in(residual, 1):
        j, beta = ctx.jet_info(s)
        for jj, alpha in leading:
            if jj == j and beta.dominates(alpha):
                raise ClosureError(
                    f"{what}: {s} is a consequence of a solved equation but lies above the closure cap"
                )


def lie_residual(S: PdeSystem, Q: VectorField, constraints: Sequence = (), cap: int | None = None) -> list:
    """``pr Q L`` restricted to the system and its differential consequences."""
    ctx = S.ctx
    r = S.order
    cap = 2 * r if cap is None else cap
    P = prolong(Q, r)
    rules = S.rules()
    out = []
    for L in S.expressions():
        R = apply_prolonged(P, L)
        R = substitute(ctx, R, rules, closure=True, cap=cap)
        _check_principal_free(ctx, R, rules, "lie_residual")
        out.append(_apply_constraints(R, constraints))
    return out


def is_lie_symmetry(S: PdeSystem, Q: VectorField, constraints: Sequence = (), cap: int | None = None) -> bool:
    return all(is_zero(r) for r in lie_residual(S, Q, constraints, cap))


def surface_rules(ops, cap: int) -> dict:
    """Invariant surface conditions solved for distinct first derivatives.

    The operators are row-reduced over their xi-coefficients; each pivot
    column ``i`` yields a rule ``u_{x_i} -> ...``.  ``m = 1`` only.
    """
    ops = tuple(ops.operators if isinstance(ops, InvolutiveSet) else ops)
    ctx = ops[0].ctx
    if ctx.m != 1:
        raise ContextError("Q-conditional invariance is implemented for one dependent variable")
    aug = sp.Matrix([list(q.xi) + [q.eta[0]] for q in ops])
    rref, pivots = aug.rref(iszerofunc=is_zero, simplify=normalize)
    if len(pivots) != len(ops) or ctx.n in pivots:
        raise SurfaceError("invariant surface conditions are not solvable for distinct derivatives")
    rules = {}
    for row, p in enumerate(pivots):
        rhs = rref[row, ctx.n]
        for c in range(ctx.n):
            if c != p and c not in pivots:
                rhs -= rref[row, c] * ctx.jet(0, MultiIndex.unit(ctx.n, c))
        rules[ctx.jet(0, MultiIndex.unit(ctx.n, p))] = normalize(rhs)
    return rules


@dataclass
class QcondResult:
    residuals: list
    surface: dict
    equation_rule: tuple
    order_checked: bool


def _qcond(E: PdeSystem, ops, constraints=()):
    ops = tuple(ops.operators if isinstance(ops, InvolutiveSet) else ops)
    if E.q != 1:
        raise ContextError("Q-conditional invariance takes a single equation")
    ctx = E.ctx
    r = E.order
    # consequences D_alpha(Qu) = 0 with |alpha| <= r - 1 reach jets of order r
    cap = r
    N = surface_rules(ops, cap)
    (lead, rhs), = E.equations
    L_n = substitute(ctx, lead - rhs, N, closure=True, cap=cap)
    prefer = lead if lead in ctx.jets_in(L_n) else None
    try:
        v, sol = solve_for_jet(ctx, L_n, prefer)
    except ContextError:
        if is_zero(L_n):
            v, sol = None, None
        else:
            raise
    triangular = not any(ctx.jets_in(val) & {lead} for val in N.values()) and lead not in N
    residuals = []
    checked = False
    for Q in ops:
        R = apply_prolonged(prolong(Q, r), lead - rhs)
        R_n = substitute(ctx, R, N, closure=True, cap=cap)
        out = substitute(ctx, R_n, {v: sol}) if v is not None else R_n
        if triangular and v == lead:
            # the other elimination order must agree
            alt = substitute(ctx, R, {lead: rhs})
            alt = substitute(ctx, alt, N, closure=True, cap=cap)
            if not is_zero(alt - out):
                raise QsymError("elimination order changed the Q-conditional residual")
            checked = True
        residuals.append(_apply_constraints(out, constraints))
    return QcondResult(residuals, N, (v, sol), checked)


def qcond_residual(E: PdeSystem, ops, constraints: Sequence = ()) -> list:
    """Residual of each ``pr Q^k L`` on ``L = 0`` and the surface conditions (differentiated up to r-1 times)."""
    if isinstance(ops, VectorField):
        ops = (ops,)
    return _qcond(E, ops, constraints).residuals


def is_qcond_symmetry(E: PdeSystem, ops, constraints: Sequence = ()) -> bool:
    return all(is_zero(r) for r in qcond_residual(E, ops, constraints))


def m_residual(E: PdeSystem, Q: VectorField, extra: int = 1) -> sp.Expr:
    """``pr Q L`` modulo all consequences of ``L = 0`` and ``Qu = 0``.

    The surface condition is closed under total derivatives up to jet order
    ``r + extra``; ``L`` and its total derivatives of order ``<= extra`` are
    then restricted to it and used as an ideal in the remaining jets, with
    the base coordinates as the coefficient field.  An inconsistent joint
    system gives 0.
    """
    ctx = E.ctx
    r = E.order
    cap = r + extra
    (lead, rhs), = E.equations
    L = lead - rhs
    N = surface_rules((Q,), cap)
    R = substitute(ctx, apply_prolonged(prolong(Q, r), L), N, closure=True, cap=cap)
    if is_zero(R):
        return R
    gens = []
    frontier = [L]
    for _ in range(extra + 1):
        gens.extend(frontier)
        frontier = [total_derivative(ctx, g, i, simplify=False) for g in frontier for i in range(ctx.n)]
    gens = [substitute(ctx, g, N, closure=True, cap=cap) for g in gens]
    nums = [sp.expand(sp.fraction(g)[0]) for g in gens if not is_zero(g)]
    num, den = sp.fraction(normalize(R))
    jets = sorted(set().union(*(ctx.jets_in(g, min_order=1) for g in nums + [num])), key=sp.default_sort_key)
    if not jets:
        return sp.S.Zero if any(g != 0 for g in nums) else R
    others = sorted(set().union(*(g.free_symbols for g in nums + [num])) - set(jets), key=sp.default_sort_key)
    domain = sp.QQ.frac_field(*others) if others else sp.QQ
    try:
        basis = sp.groebner(nums, *jets, order="grevlex", domain=domain)
    except sp.PolificationFailed:
        return normalize(R)
    if basis.exprs == [1]:
        return sp.S.Zero
    _, rem = basis.reduce(sp.expand(num))
    return normalize(rem / den)


# -- determining systems ----------------------------------------------------------


def canonical_equation(e) -> sp.Expr:
    """Numerator with rational content removed and a positive leading coefficient."""
    num, _ = sp.fraction(normalize(e))
    num = sp.expand(num)
    if num == 0:
        return num
    poly = sp.Poly(num)
    if poly.is_ground:
        return sp.S.One
    _, prim = poly.primitive()
    if prim.LC().could_extract_minus_sign():
        prim = -prim
    return sp.expand(prim.as_expr())


@dataclass
class DeterminingSystem:
    equations: list
    template: object
    split_vars: list
    by_monomial: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.equations)

    def __iter__(self):
        return iter(self.equations)

    def unknowns(self) -> list[str]:
        names = set()
        for e in self.equations:
            for f in e.atoms(AppliedUndef):
                names.add(f.func.__name__)
        return sorted(names)


def _parametric(ctx: JetContext, residual) -> list:
    jets = ctx.jets_in(residual, min_order=1)
    args = set()
    for f in residual.atoms(AppliedUndef):
        args |= set(f.args)
    deps = {u for u in ctx.dependent if u in residual.free_symbols and u not in args}
    return sorted(jets | deps, key=sp.default_sort_key)


def _split(ctx, residuals, template) -> DeterminingSystem:
    equations = []
    by_mono = {}
    split_vars = set()
    for R in residuals:
        R = normalize(R)
        variables = _parametric(ctx, R)
        split_vars |= set(variables)
        for mono, coeff in collect_coefficients(R, variables).items():
            eq = canonical_equation(coeff)
            if eq == 0:
                continue
            by_mono.setdefault(mono, eq)
            if eq not in equations:
                equations.append(eq)
    equations.sort(key=sp.default_sort_key)
    return DeterminingSystem(equations, template, sorted(split_vars, key=sp.default_sort_key), by_mono)


def qcond_determining_system(E: PdeSystem, template, constraints: Sequence = ()) -> DeterminingSystem:
    ops = (template,) if isinstance(template, VectorField) else tuple(template)
    residuals = qcond_residual(E, ops, constraints)
    return _split(E.ctx, residuals, template)


def lie_determining_system(S: PdeSystem, template: VectorField, constraints: Sequence = ()) -> DeterminingSystem:
    residuals = lie_residual(S, template, constraints)
    return _split(S.ctx, residuals, template)


# -- algebras ----------------------------------------------------------------------


@dataclass
class ClosureReport:
    closed: bool
    table: dict  # (a, b) -> constant coefficients or None
    ideal: dict = field(default_factory=dict)  # a -> bool


def _constant_combination(target: VectorField, ops: Sequence[VectorField], params) -> list | None:
    cs = [sp.Dummy(f"c{k}") for k in range(len(ops))]
    eqs = []
    params = set(params) | set(cs)
    for k, comp in enumerate(target.coefficients):
        expr = comp - sum((c * q.coefficients[k] for c, q in zip(cs, ops)), sp.S.Zero)
        num, _ = sp.fraction(sp.together(normalize(expr)))
        num = sp.expand(num)
        if num == 0:
            continue
        gens = [s for s in num.free_symbols if s not in params]
        gens += [a for a in num.atoms(sp.exp, AppliedUndef, sp.Derivative) if a.free_symbols - params]
        gens = sorted(set(gens), key=sp.default_sort_key)
        if not gens:
            eqs.append(num)
            continue
        eqs.extend(sp.Poly(num, *gens).coeffs())
    if not eqs:
        return [sp.S.Zero] * len(ops)
    sol = sp.linsolve(eqs, cs)
    if not sol:
        return None
    (values,) = sol
    free = {c: 0 for c in cs}
    return [normalize(sp.sympify(v).xreplace(free)) for v in values]


def check_algebra_closure(
    ops: Sequence[VectorField],
    system: PdeSystem | None = None,
    ideal: VectorField | None = None,
    constraints: Sequence = (),
) -> ClosureReport:
    """Check that pairwise brackets lie in the constant-coefficient span.

    ``ideal`` is an operator ``f d/du`` with ``f`` constrained by
    ``constraints``; its brackets with ``ops`` must again be of that form and
    a symmetry of ``system``.
    """
    ops = list(ops)
    params = set(ops[0].ctx.params.values()) if ops else set()
    table = {}
    closed = True
    for a, b in itertools.combinations(range(len(ops)), 2):
        br = lie_bracket(ops[a], ops[b])
        coeffs = _constant_combination(br, ops, params)
        table[(a, b)] = coeffs
        closed = closed and coeffs is not None
    ideal_ok = {}
    if ideal is not None:
        if system is None:
            raise ValueError("ideal check needs the system")
        for a, q in enumerate(ops):
            br = lie_bracket(q, ideal)
            ok = all(is_zero(c) for c in br.xi) and is_lie_symmetry(system, br, constraints)
            ideal_ok[a] = ok
            closed = closed and ok
    return ClosureReport(closed, table, ideal_ok)


# -- coefficient-space operators ---------------------------------------------------


def determining_to_system(det, independent: Sequence[str], unknowns: Sequence[str], params: Sequence[str] = (), name: str = "") -> PdeSystem:
    """Rewrite a determining system as a PDE system whose dependent variables are the unknowns.

    Every unknown must take exactly ``independent`` as its arguments.
    Each equation is solved for its lexicographically greatest linear jet.
    """
    ctx = JetContext(independent, unknowns, params=params)
    equations = det.equations if isinstance(det, DeterminingSystem) else list(det)
    rows = []
    for e in equations:
        rows.append(to_jets(ctx, e))
    return PdeSystem(ctx, [solve_for_jet(ctx, e) for e in rows], name)


def to_jets(ctx: JetContext, e) -> sp.Expr:
    """Unknown functions named like dependent variables of ``ctx`` become jets."""
    e = sp.sympify(e)
    names = {str(u): j for j, u in enumerate(ctx.dependent)}
    repl = {}
    for d in e.atoms(sp.Derivative):
        f = d.expr
        if isinstance(f, AppliedUndef) and f.func.__name__ in names:
            if tuple(f.args) != ctx.independent:
                raise ContextError(f"{f} does not take the arguments {ctx.independent}")
            counts = [0] * ctx.n
            for v, c in d.variable_count:
                counts[ctx.var_index(v)] += c
            repl[d] = ctx.jet(names[f.func.__name__], counts)
    for f in e.atoms(AppliedUndef):
        if f.func.__name__ in names:
            if tuple(f.args) != ctx.independent:
                raise ContextError(f"{f} does not take the arguments {ctx.independent}")
            repl[f] = ctx.dependent[names[f.func.__name__]]
    return normalize(e.xreplace(repl))


def from_jets(ctx: JetContext, e) -> sp.Expr:
    """Inverse of :func:`to_jets`: jets become derivatives of applied functions."""
    e = sp.sympify(e)
    repl = {}
    for s in ctx.jets_in(e):
        j, alpha = ctx.jet_info(s)
        f = sp.Function(str(ctx.dependent[j]))(*ctx.independent)
        steps = [(x, c) for x, c in zip(ctx.independent, alpha) if c]
        repl[s] = sp.Derivative(f, *steps) if steps else f
    return e.xreplace(repl)


def induced_operator(X: VectorField, template: VectorField, target: JetContext) -> VectorField:
    """Lift a point symmetry ``X`` to the coefficient space of a normalized template.

    ``template`` has one xi-component equal to 1 and coefficients built from
    unknown functions named like the dependent variables of ``target``,
    whose independent variables are the unknowns' arguments.  The lift
    describes how ``X`` moves the template's coefficients.
    """
    ctx = X.ctx
    pivot = next((i for i, c in enumerate(template.xi) if c == 1), None)
    if pivot is None:
        raise ContextError("template needs a unit xi-component")
    names = [str(u) for u in target.dependent]
    G = {n: sp.Dummy(n) for n in names}
    funcs = {}
    for e in template.coefficients:
        for f in e.atoms(AppliedUndef):
            if f.func.__name__ in G:
                funcs[f] = G[f.func.__name__]
    Qc = [c.xreplace(funcs) for c in template.coefficients]
    Xc = list(X.coefficients)
    coords = ctx.independent + ctx.dependent

    def act(coeffs, e):
        return sum((c * sp.diff(e, s) for c, s in zip(coeffs, coords)), sp.S.Zero)

    bracket_p = -act(Qc, Xc[pivot])
    etas = {n: sp.Dummy(f"eta_{n}") for n in names}
    extra = [s for s in coords if s not in target.independent]
    equations = []
    for a in range(len(coords)):
        if a == pivot:
            continue
        change = act(Qc, Xc[a]) - act(Xc, Qc[a]) + bracket_p * Qc[a]
        lhs = sum((sp.diff(Qc[a], G[n]) * etas[n] for n in names), sp.S.Zero)
        diff = sp.expand(normalize(change - lhs))
        if diff == 0:
            continue
        keep = [s for s in extra if s in diff.free_symbols]
        if keep:
            equations.extend(sp.Poly(diff, *keep).coeffs())
        else:
            equations.append(diff)
    sol = sp.solve(equations, list(etas.values()), dict=True) if equations else [{}]
    if not sol:
        raise ContextError("operator does not act on the template's coefficients")
    back = {g: target.dependent[names.index(n)] for n, g in G.items()}
    eta = tuple(normalize(sp.sympify(sol[0].get(etas[n], 0)).xreplace(back)) for n in names)
    xi = []
    for s in target.independent:
        if s not in coords:
            raise ContextError(f"{s} is not a coordinate of the base space")
        c = Xc[coords.index(s)]
        if set(extra) & c.free_symbols:
            raise ContextError("operator is not projectable onto the unknowns' arguments")
        xi.append(c.xreplace(funcs))
    return VectorField(target, tuple(xi), eta)
