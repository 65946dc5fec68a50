"""Ansatz verification, reduction of a PDE under an ansatz, and compatibility probes."""

from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp
from sympy.core.function import AppliedUndef

from .expr import ContextError, JetContext, MultiIndex, QsymError, is_zero, normalize
from .invariance import PdeSystem
from .operators import InvolutiveSet, RankError, VectorField, characteristic, symbolic_rank

__all__ = [
    "Ansatz",
    "ReducedEquation",
    "ReductionError",
    "verify_ansatz",
    "reduce",
    "joint_system_check",
    "evaluate_on",
    "is_solution",
]


class ReductionError(QsymError):
    """The residual does not rewrite in the invariants; ``remainder`` holds it."""

    def __init__(self, message, remainder=None):
        super().__init__(message)
        self.remainder = remainder


@dataclass
class Ansatz:
    """``u = form`` where ``form`` uses an unknown ``phi(w_1, ...)`` of the invariants.

    ``invariants`` maps each invariant symbol ``w_l`` to its expression in
    (x, u); ``solve_for`` names one independent variable per invariant that
    is eliminated when rewriting in the invariants.
    """

    ctx: JetContext
    invariants: dict
    form: sp.Expr
    solve_for: tuple
    phi: str = "phi"
    W: tuple = ()

    def __post_init__(self):
        self.invariants = {sp.Symbol(k) if isinstance(k, str) else k: sp.sympify(v) for k, v in self.invariants.items()}
        self.solve_for = tuple(sp.Symbol(s) if isinstance(s, str) else s for s in self.solve_for)
        self.form = sp.sympify(self.form)
        if len(self.solve_for) != len(self.invariants):
            raise ValueError("one solvable variable per invariant is required")
        self.reduced_ctx = JetContext(
            [str(w) for w in self.invariants],
            [self.phi],
            max_order=self.ctx.max_order,
            params=[p for p in self.ctx.params],
        )

    def phi_call(self):
        return sp.Function(self.phi)(*self.invariants)

    def explicit_form(self) -> sp.Expr:
        """The form with ``phi(w)`` replaced by the reduced-context symbol and ``w`` by ``omega(x)``."""
        for w, om in self.invariants.items():
            if self.ctx.dependent[0] in om.free_symbols:
                raise ContextError(f"invariant {w} depends on the unknown; no explicit form")
        phi0 = self.reduced_ctx.dependent[0]
        e = self.form.xreplace({self.phi_call(): phi0})
        if any(a.func.__name__ == self.phi for a in e.atoms(AppliedUndef)):
            raise ContextError(f"{self.phi} must be applied to the invariants {tuple(self.invariants)}")
        return e.xreplace(dict(self.invariants))


@dataclass
class ReducedEquation:
    equation: sp.Expr  # in the invariants and phi-jets
    multiplier: sp.Expr
    ansatz: Ansatz = field(repr=False)

    @property
    def inconsistent(self) -> bool:
        """Reduced equation is ``c = 0`` with a nonzero constant ``c``."""
        eq = normalize(self.equation)
        return eq != 0 and not eq.free_symbols and not eq.atoms(AppliedUndef)

    def as_function(self) -> sp.Expr:
        """The equation written with ``phi(w)`` and its derivatives."""
        R = self.ansatz.reduced_ctx
        call = self.ansatz.phi_call()
        repl = {}
        for s in R.jets_in(self.equation):
            _, alpha = R.jet_info(s)
            steps = [(w, c) for w, c in zip(R.independent, alpha) if c]
            repl[s] = sp.diff(call, *steps) if steps else call
        return self.equation.xreplace(repl)


def _chain_derivative(A: Ansatz, e, i: int):
    """d/dx_i of an expression in x and phi-jets, phi evaluated at omega(x)."""
    ctx, R = A.ctx, A.reduced_ctx
    x = ctx.independent[i]
    omegas = list(A.invariants.values())
    out = sp.diff(e, x)
    for s in R.jets_in(e):
        j, beta = R.jet_info(s)
        d = sp.diff(e, s)
        if d == 0:
            continue
        for l, om in enumerate(omegas):
            dom = sp.diff(om, x)
            if dom != 0:
                out += R.jet(j, beta + MultiIndex.unit(R.n, l)) * dom * d
    return out


def _check_rank(ops):
    xi = sp.Matrix([list(q.xi) for q in ops])
    full = sp.Matrix([list(q.xi) + list(q.eta) for q in ops])
    s = len(ops)
    r1, r2 = symbolic_rank(xi), symbolic_rank(full)
    if r1 != s or r2 != s:
        raise RankError(f"rank condition fails: rank(xi) = {r1}, rank(xi, eta) = {r2}, s = {s}")


def verify_ansatz(S, A: Ansatz) -> bool:
    """Invariants annihilated by every operator, and the form solves ``Q u = 0``."""
    ops = tuple(S.operators if isinstance(S, InvolutiveSet) else S if not isinstance(S, VectorField) else (S,))
    _check_rank(ops)
    for q in ops:
        for om in A.invariants.values():
            if not is_zero(q.apply(om)):
                return False
        for W in A.W:
            if not is_zero(q.apply(W)):
                return False
    u = A.ctx.dependent[0]
    if A.W:
        jac = sp.Matrix([[sp.diff(W, u)] for W in A.W])
        if any(is_zero(c) for c in jac):
            return False
    F = A.explicit_form()
    if is_zero(sp.diff(F, A.reduced_ctx.dependent[0])):
        return False
    for q in ops:
        if not is_zero(_on_form(A, characteristic(q), F)):
            return False
    return True


def _on_form(A: Ansatz, e, F):
    ctx = A.ctx
    repl = {}
    cache = {MultiIndex.zero(ctx.n): F}
    for s in sorted(ctx.jets_in(e), key=lambda s: ctx.jet_info(s)[1].order):
        j, alpha = ctx.jet_info(s)
        repl[s] = _form_derivative(A, alpha, cache)
    return normalize(sp.sympify(e).xreplace(repl))


def _form_derivative(A, alpha, cache):
    if alpha in cache:
        return cache[alpha]
    i = next(k for k, c in enumerate(alpha) if c)
    lower = alpha - MultiIndex.unit(len(alpha), i)
    value = normalize(_chain_derivative(A, _form_derivative(A, lower, cache), i))
    cache[alpha] = value
    return value


def reduce(E: PdeSystem, A: Ansatz, S=None, waive: bool = False) -> ReducedEquation:
    """Substitute the ansatz and rewrite the residual in the invariants.

    Factors that still depend on the original variables are returned as the
    multiplier; what remains is the reduced equation.
    """
    if E.q != 1:
        raise ContextError("reduce takes a single equation")
    if not waive:
        if S is None:
            raise ValueError("pass the reducing operators or waive the ansatz check")
        if not verify_ansatz(S, A):
            raise ReductionError("ansatz is not invariant under the given operators")
    (L,) = E.expressions()
    F = A.explicit_form()
    residual = _on_form(A, L, F)
    for w, om in A.invariants.items():
        x = A.solve_for[list(A.invariants).index(w)]
        sols = sp.solve(sp.Eq(w, om), x, dict=False)
        if len(sols) != 1:
            raise ReductionError(f"cannot solve {w} = {om} uniquely for {x}", residual)
        residual = normalize(residual.xreplace({x: sols[0]}))
    xs = set(A.ctx.independent)
    if not (residual.free_symbols & xs):
        return ReducedEquation(residual, sp.S.One, A)
    num, den = sp.fraction(normalize(residual))
    const, factors = sp.factor_list(num)
    keep, mult = sp.S.One, 1 / den
    for f, k in factors:
        if f.free_symbols & xs:
            mult *= f**k
        else:
            keep *= f**k
    if keep == 1:
        if any(A.reduced_ctx.jets_in(f) for f, _ in factors):
            raise ReductionError("no factor of the residual is free of the original variables", residual)
        # only a constant survives: the reduced equation reads const = 0
        keep = const
    else:
        mult *= const
    if keep.free_symbols & xs:
        raise ReductionError("residual does not reduce to the invariants", residual)
    return ReducedEquation(normalize(keep), normalize(mult), A)


def evaluate_on(ctx: JetContext, e, solution) -> sp.Expr:
    """Replace ``u`` and its jets by an explicit function of x and its derivatives."""
    solution = sp.sympify(solution)
    repl = {}
    for s in ctx.jets_in(e):
        j, alpha = ctx.jet_info(s)
        steps = [(x, c) for x, c in zip(ctx.independent, alpha) if c]
        repl[s] = sp.diff(solution, *steps) if steps else solution
    return normalize(sp.sympify(e).xreplace(repl))


def is_solution(E: PdeSystem, solution) -> bool:
    return all(is_zero(evaluate_on(E.ctx, L, solution)) for L in E.expressions())


def joint_system_check(E: PdeSystem, S, candidate) -> bool:
    """Does ``candidate`` solve both the equation and every ``Q^k u = 0``?"""
    ops = tuple(S.operators if isinstance(S, InvolutiveSet) else S if not isinstance(S, VectorField) else (S,))
    candidate = sp.sympify(candidate)
    if E.ctx.dependent[0] in candidate.free_symbols:
        raise ContextError("candidate must be an explicit function of the independent variables")
    if not is_solution(E, candidate):
        return False
    return all(is_zero(evaluate_on(E.ctx, characteristic(q), candidate)) for q in ops)
