"""Jet-space expression kernel.

Expressions are plain sympy expressions.  This module adds the jet-space
layer on top: multiindices, a context that owns the jet coordinates
``u_alpha``, total derivatives, substitution with differential
consequences, canonical normalization and coefficient splitting.

sympy is used as the arithmetic backend (exact rationals, multivariate
polynomial gcd).  Everything that knows about jets lives here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import sympy as sp
from sympy.core.function import AppliedUndef

__all__ = [
    "QsymError",
    "ContextError",
    "SubstitutionError",
    "ClosureError",
    "NonPolynomialError",
    "MultiIndex",
    "JetContext",
    "Int",
    "normalize",
    "is_zero",
    "partial_derivative",
    "total_derivative",
    "total_derivative_multi",
    "substitute",
    "collect_coefficients",
    "unknown_atoms",
    "replace_unknown",
]


class QsymError(Exception):
    """Base class for engine errors."""


class ContextError(QsymError):
    pass


class SubstitutionError(QsymError):
    pass


class ClosureError(QsymError):
    pass


class NonPolynomialError(QsymError):
    def __init__(self, message: str, subterm=None):
        super().__init__(message)
        self.subterm = subterm


class MultiIndex(tuple):
    """Derivative counts ``(a_1, ..., a_n)`` per independent variable."""

    def __new__(cls, counts: Iterable[int]):
        counts = tuple(int(c) for c in counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"negative multiindex entry in {counts}")
        return super().__new__(cls, counts)

    @classmethod
    def zero(cls, n: int) -> "MultiIndex":
        return cls((0,) * n)

    @classmethod
    def unit(cls, n: int, i: int) -> "MultiIndex":
        return cls(1 if k == i else 0 for k in range(n))

    @property
    def order(self) -> int:
        return sum(self)

    def __add__(self, other):
        if len(self) != len(other):
            raise ValueError("multiindex length mismatch")
        return MultiIndex(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        return MultiIndex(a - b for a, b in zip(self, other))

    def dominates(self, other: "MultiIndex") -> bool:
        """True if ``self >= other`` componentwise."""
        return all(a >= b for a, b in zip(self, other))

    def steps(self) -> list[int]:
        """Variable indices to differentiate by, in ascending order."""
        return [i for i, c in enumerate(self) for _ in range(c)]

    def __repr__(self):
        return f"MultiIndex({tuple(self)})"


class Int(sp.Integral):
    """Formal antiderivative in one variable.

    Differentiates back to its integrand and is never evaluated.  Normal
    forms treat it as a linear operator: it is split over sums and factors
    free of the variable are pulled out.
    """

    def doit(self, **hints):
        return self

    def _eval_derivative(self, sym):
        (var,) = self.variables
        if sym == var:
            return self.function
        return Int(sp.diff(self.function, sym), var)

    def _eval_is_zero(self):
        return None


def _int(integrand, var) -> Int:
    integrand = normalize(integrand)
    if integrand == 0:
        return sp.S.Zero
    return Int(integrand, var)


@dataclass(frozen=True)
class _Rule:
    lhs: sp.Symbol
    j: int
    alpha: MultiIndex
    rhs: sp.Expr


class JetContext:
    """Independent/dependent variable names and the jet coordinates over them.

    Jet coordinates are sympy symbols registered here; the order-zero jet of
    ``u^j`` is the dependent variable symbol itself.  Higher jets are created
    on demand, so ``max_order`` only bounds what callers may request.
    """

    def __init__(
        self,
        independent: Sequence[str],
        dependent: Sequence[str],
        max_order: int = 8,
        params: Sequence[str] = (),
    ):
        if len(independent) < 1 or len(dependent) < 1:
            raise ContextError("need at least one independent and one dependent variable")
        names = list(independent) + list(dependent) + list(params)
        if len(set(names)) != len(names):
            raise ContextError(f"duplicate variable names in {names}")
        self.independent = tuple(sp.Symbol(n) for n in independent)
        self.dependent = tuple(sp.Symbol(n) for n in dependent)
        self.max_order = max_order
        self.params: dict[str, sp.Symbol] = {n: sp.Symbol(n) for n in params}
        self.unknowns: dict[str, tuple[sp.Symbol, ...]] = {}
        self._jets: dict[tuple[int, MultiIndex], sp.Symbol] = {}
        self._info: dict[sp.Symbol, tuple[int, MultiIndex]] = {}
        self._short = all(len(n) == 1 for n in independent)
        for j, s in enumerate(self.dependent):
            alpha = MultiIndex.zero(self.n)
            self._jets[(j, alpha)] = s
            self._info[s] = (j, alpha)

    @property
    def n(self) -> int:
        return len(self.independent)

    @property
    def m(self) -> int:
        return len(self.dependent)

    def __repr__(self):
        xs = ",".join(map(str, self.independent))
        us = ",".join(map(str, self.dependent))
        return f"JetContext(({xs}) -> ({us}))"

    # -- symbols -------------------------------------------------------------

    def var_index(self, name) -> int:
        s = sp.Symbol(name) if isinstance(name, str) else name
        try:
            return self.independent.index(s)
        except ValueError:
            raise ContextError(f"{name} is not an independent variable") from None

    def dep_index(self, name) -> int:
        s = sp.Symbol(name) if isinstance(name, str) else name
        try:
            return self.dependent.index(s)
        except ValueError:
            raise ContextError(f"{name} is not a dependent variable") from None

    def jet(self, j: int | str, alpha: Sequence[int]) -> sp.Symbol:
        if not isinstance(j, int):
            j = self.dep_index(j)
        alpha = MultiIndex(alpha)
        if len(alpha) != self.n:
            raise ContextError(f"multiindex {tuple(alpha)} has wrong length for {self!r}")
        if alpha.order > self.max_order:
            raise ClosureError(
                f"jet order {alpha.order} exceeds context maximum {self.max_order}"
            )
        key = (j, alpha)
        s = self._jets.get(key)
        if s is None:
            letters = [str(self.independent[i]) for i in alpha.steps()]
            sep = "" if self._short else "_"
            s = sp.Symbol(f"{self.dependent[j]}_{sep.join(letters)}")
            self._jets[key] = s
            self._info[s] = key
        return s

    def d(self, dep, *steps) -> sp.Symbol:
        """Jet symbol from variable names, e.g. ``ctx.d('u', 'x', 'x')``."""
        counts = [0] * self.n
        for v in steps:
            counts[self.var_index(v)] += 1
        return self.jet(dep, counts)

    def jet_info(self, s) -> tuple[int, MultiIndex] | None:
        return self._info.get(s)

    def is_jet(self, s) -> bool:
        return s in self._info

    def jets_in(self, e, min_order: int = 0) -> set[sp.Symbol]:
        found = set()
        for s in sp.sympify(e).free_symbols:
            info = self._info.get(s)
            if info is None:
                info = self._register_by_name(s)
            if info is not None and info[1].order >= min_order:
                found.add(s)
        return found

    def _register_by_name(self, s):
        # jets created by another context with identical names
        name = s.name
        for j, u in enumerate(self.dependent):
            prefix = f"{u}_"
            if not name.startswith(prefix):
                continue
            rest = name[len(prefix):]
            if self._short:
                letters = list(rest)
            else:
                letters = rest.split("_")
            try:
                counts = [0] * self.n
                for v in letters:
                    counts[self.var_index(v)] += 1
            except ContextError:
                continue
            if sum(counts) == 0:
                continue
            return self._info[self.jet(j, counts)] if sum(counts) <= self.max_order else None
        return None

    def order(self, e) -> int:
        jets = self.jets_in(e)
        return max((self._info[s][1].order for s in jets), default=0)

    def param(self, name: str) -> sp.Symbol:
        if name in self._names() and name not in self.params:
            raise ContextError(f"{name} already declared")
        s = self.params.setdefault(name, sp.Symbol(name))
        return s

    def unknown(self, name: str, args: Sequence) -> AppliedUndef:
        """Declare an unknown function with an explicit argument signature."""
        argsyms = tuple(sp.Symbol(a) if isinstance(a, str) else a for a in args)
        prev = self.unknowns.get(name)
        if prev is not None and prev != argsyms:
            raise ContextError(f"unknown function {name} redeclared with different arguments")
        if name in self._names():
            raise ContextError(f"{name} clashes with a variable name")
        allowed = set(self.independent) | set(self.dependent) | set(self.params.values())
        for a in argsyms:
            if a not in allowed:
                raise ContextError(f"argument {a} of {name} is not a declared symbol")
        self.unknowns[name] = argsyms
        return sp.Function(name)(*argsyms)

    def _names(self) -> set[str]:
        return {str(s) for s in self.independent + self.dependent} | set(self.params)

    def copy(self) -> "JetContext":
        other = JetContext(
            [str(s) for s in self.independent],
            [str(s) for s in self.dependent],
            self.max_order,
            list(self.params),
        )
        other.unknowns = dict(self.unknowns)
        return other

    def validate(self, e) -> sp.Expr:
        """Raise ``ContextError`` unless every symbol in ``e`` belongs here."""
        e = sp.sympify(e)
        bound = set()
        for integral in e.atoms(sp.Integral):
            bound |= {v for v in integral.variables if v not in self.independent}
        for s in e.free_symbols - bound:
            if s in self.independent or s in self.params.values() or self.is_jet(s):
                continue
            if self._register_by_name(s) is not None:
                continue
            raise ContextError(f"unknown symbol {s}")
        for f in e.atoms(AppliedUndef):
            name = f.func.__name__
            sig = self.unknowns.get(name)
            if sig is None:
                raise ContextError(f"undeclared function {name}")
            if tuple(f.args) != sig:
                raise ContextError(f"{name} applied to {f.args}, declared {sig}")
        return e


# -- normalization ---------------------------------------------------------------


def _canonical_exp(arg):
    """Product of exponentials with canonical arguments.

    The argument is split into its rational part, taken term by term, and one
    factor per monomial in the antiderivative nodes, so equal exponents print
    alike whatever their source.
    """
    arg = normalize(arg)
    shielded, restore = _shield(arg)
    num, den = sp.fraction(sp.cancel(sp.together(shielded)))
    groups: dict = {}
    for term in sp.Add.make_args(sp.expand(num)):
        coeff, mono = term.as_independent(*restore) if restore else (term, sp.S.One)
        groups[mono] = groups.get(mono, sp.S.Zero) + coeff
    factors = []
    for mono in sorted(groups, key=sp.default_sort_key):
        c = sp.cancel(groups[mono] / den)
        if mono == 1:
            factors.extend(sp.exp(t) for t in sp.Add.make_args(sp.expand(c)))
        else:
            factors.append(sp.exp(c * mono))
    return sp.Mul(*factors).xreplace(restore)


def _canonical_int(node):
    """``Int`` applied termwise, with factors free of the variable pulled out."""
    (var,) = node.variables
    f = normalize(node.function)
    num, den = sp.fraction(f)
    den_free, den_var = sp.S.One, sp.S.One
    for fac in sp.Mul.make_args(sp.factor_terms(den)):
        if fac.has(var):
            den_var *= fac
        else:
            den_free *= fac
    groups: dict = {}
    for term in sp.Add.make_args(sp.expand(num)):
        free, dep = sp.S.One, sp.S.One
        for fac in sp.Mul.make_args(term):
            if fac.has(var):
                dep *= fac
            else:
                free *= fac
        groups[dep] = groups.get(dep, sp.S.Zero) + free
    out = sp.S.Zero
    for dep in sorted(groups, key=sp.default_sort_key):
        c = groups[dep] / den_free
        if c != 0:
            out += c * Int(dep / den_var, var)
    return out


def _shield(e):
    """Replace antiderivative nodes by dummies so that cancel leaves them alone."""
    if not e.has(sp.Integral):
        return e, {}
    e = e.replace(lambda a: isinstance(a, sp.Integral), _canonical_int)
    table = {}
    for node in sorted(e.atoms(sp.Integral), key=sp.default_sort_key):
        table.setdefault(node, sp.Dummy("I"))
    return e.xreplace(table), {d: node for node, d in table.items()}


def _is_polynomial(e) -> bool:
    # polynomials in symbols and unknown-function terms: cancel would only expand
    if isinstance(e, (sp.Symbol, sp.Rational)):
        return True
    if isinstance(e, (sp.Add, sp.Mul)):
        return all(_is_polynomial(a) for a in e.args)
    if isinstance(e, sp.Pow):
        return e.exp.is_Integer and e.exp > 0 and _is_polynomial(e.base)
    if isinstance(e, sp.Derivative):
        e = e.expr
    return isinstance(e, AppliedUndef) and all(isinstance(a, sp.Symbol) for a in e.args)


def normalize(e) -> sp.Expr:
    """Canonical form: one reduced fraction of expanded polynomials.

    Generators are symbols, unknown-function derivatives, exponentials of
    single expanded terms, logs and formal antiderivatives.  Idempotent.
    """
    e = sp.sympify(e)
    if e.is_Atom:
        return e
    if _is_polynomial(e):
        return sp.expand(e)
    if e.has(sp.exp):
        e = e.replace(lambda a: isinstance(a, sp.exp), lambda a: _canonical_exp(a.args[0]))
    if e.has(sp.log):
        e = e.replace(lambda a: isinstance(a, sp.log), lambda a: sp.log(normalize(a.args[0])))
    restore = {}
    if e.has(sp.Integral):
        e, restore = _shield(e)
    out = sp.cancel(sp.together(e))
    if out.is_Add and out.has(sp.exp):
        out = sp.cancel(out)
    if restore:
        out = out.xreplace(restore)
    return out


def is_zero(e) -> bool:
    """Exact zero test; complete for rational functions, structural otherwise."""
    e = sp.sympify(e)
    if e.is_Atom:
        return e == 0
    if e.has(sp.exp):
        e = e.replace(lambda a: isinstance(a, sp.exp), lambda a: _canonical_exp(a.args[0]))
    if e.has(sp.Integral):
        e, _ = _shield(e)
    if e.has(sp.exp):
        e = _exp_as_powers(e)
    fast = _field_zero(e)
    if fast is not None:
        return fast
    num, _den = sp.fraction(sp.together(e))
    return sp.expand(num) == 0


def _field_zero(e):
    """Zero test in the rational function field over QQ; None when it does not apply."""
    opaque = e.atoms(AppliedUndef, sp.Derivative)
    if e.atoms(sp.Function) - e.atoms(AppliedUndef):
        return None
    gens = sorted(e.free_symbols | opaque, key=sp.default_sort_key)
    if not gens:
        return None
    try:
        K, *_ = sp.field(gens, sp.QQ)
        return K.from_expr(e) == 0
    except (ValueError, TypeError, sp.CoercionFailed, sp.GeneratorsError, ZeroDivisionError):
        return None


def _exp_as_powers(e):
    """Write ``exp(c*m)`` as ``Y_m**(c*q)`` with one fresh symbol per monomial ``m``.

    Exponentials of distinct nonconstant monomials are algebraically
    independent over rational functions, so zero testing survives the swap.
    Arguments that are not rational multiples of a monomial are left alone.
    """
    groups: dict = {}
    for a in e.atoms(sp.exp):
        c, m = a.args[0].as_coeff_Mul()
        if m == 1 or not c.is_Rational or not m.is_Symbol and not (m.is_Mul or m.is_Pow) or m.has(sp.exp, sp.Dummy):
            continue
        if not all(f.is_Symbol or f.is_Pow and f.base.is_Symbol and f.exp.is_Integer for f in sp.Mul.make_args(m)):
            continue
        groups.setdefault(m, []).append((a, c))
    repl = {}
    for m, items in groups.items():
        q = sp.ilcm(*[c.q for _, c in items]) if len(items) > 1 else items[0][1].q
        y = sp.Dummy("Y")
        for a, c in items:
            repl[a] = y ** int(c * q)
    return e.xreplace(repl) if repl else e


# -- differentiation -------------------------------------------------------------


def partial_derivative(ctx: JetContext, e, s) -> sp.Expr:
    """Formal partial derivative; all jet coordinates are independent symbols."""
    if isinstance(s, str):
        s = sp.Symbol(s)
    if not (
        s in ctx.independent
        or ctx.is_jet(s)
        or s in ctx.params.values()
        or ctx._register_by_name(s) is not None
    ):
        raise ContextError(f"cannot differentiate by {s}: not a symbol of {ctx!r}")
    return sp.diff(sp.sympify(e), s)


def total_derivative(ctx: JetContext, e, i, simplify: bool = True) -> sp.Expr:
    """``D_i e = e_{x_i} + sum u_{alpha+e_i} * e_{u_alpha}``."""
    if not isinstance(i, int):
        i = ctx.var_index(i)
    e = sp.sympify(e)
    x = ctx.independent[i]
    step = MultiIndex.unit(ctx.n, i)
    out = sp.diff(e, x)
    for s in sorted(ctx.jets_in(e), key=sp.default_sort_key):
        j, alpha = ctx.jet_info(s)
        out += ctx.jet(j, alpha + step) * sp.diff(e, s)
    return normalize(out) if simplify else out


def total_derivative_multi(ctx: JetContext, e, alpha: Sequence[int], simplify: bool = True):
    alpha = MultiIndex(alpha)
    out = sp.sympify(e)
    for i in alpha.steps():
        out = total_derivative(ctx, out, i, simplify=False)
    return normalize(out) if simplify else out


# -- substitution ----------------------------------------------------------------


def substitute(
    ctx: JetContext,
    e,
    rules: Mapping,
    closure: bool = False,
    cap: int | None = None,
    simplify: bool = True,
) -> sp.Expr:
    """Simultaneous replacement of symbols or jets.

    With ``closure`` set, a jet ``u_beta`` with ``beta >= alpha`` for some rule
    ``u_alpha -> R`` and ``|beta| <= cap`` is replaced by ``D_{beta-alpha} R``
    (with the rules re-applied).  Jets above ``cap`` are left alone.
    """
    e = sp.sympify(e)
    rules = {sp.sympify(k): sp.sympify(v) for k, v in rules.items()}
    if not rules:
        return normalize(e) if simplify else e
    lhs = set(rules)
    for k, v in rules.items():
        if v.free_symbols & lhs:
            raise SubstitutionError(f"rule {k} -> {v} refers to a rule left-hand side")
    if not closure:
        out = e.xreplace(rules)
        return normalize(out) if simplify else out
    if cap is None:
        raise SubstitutionError("consequence closure needs an order cap")
    jet_rules = []
    for k, v in rules.items():
        info = ctx.jet_info(k)
        if info is None:
            info = ctx._register_by_name(k)
        if info is None:
            raise SubstitutionError(f"closure rule on non-jet symbol {k}")
        jet_rules.append(_Rule(k, info[0], info[1], v))
    for a, b in itertools.permutations(jet_rules, 2):
        if a.j == b.j and a.alpha.dominates(b.alpha):
            raise SubstitutionError(f"rule {a.lhs} is a consequence of rule {b.lhs}")
    memo: dict[sp.Symbol, sp.Expr] = {}
    out = _close(ctx, e, jet_rules, cap, memo, set())
    return normalize(out) if simplify else out


def _close(ctx, e, rules, cap, memo, active):
    repl = {}
    for s in ctx.jets_in(e):
        r = _consequence(ctx, s, rules, cap, memo, active)
        if r is not None:
            repl[s] = r
    return e.xreplace(repl) if repl else e


def _consequence(ctx, s, rules, cap, memo, active):
    if s in memo:
        return memo[s]
    j, beta = ctx.jet_info(s)
    if beta.order > cap:
        return None
    candidates = [r for r in rules if r.j == j and beta.dominates(r.alpha)]
    if not candidates:
        return None
    if s in active:
        raise ClosureError(f"cyclic differential consequences through {s}")
    # the nearest rule, ties broken by the multiindex itself
    rule = min(candidates, key=lambda r: ((beta - r.alpha).order, tuple(-c for c in r.alpha)))
    active.add(s)
    value = total_derivative_multi(ctx, rule.rhs, beta - rule.alpha, simplify=False)
    value = normalize(_close(ctx, value, rules, cap, memo, active))
    active.discard(s)
    memo[s] = value
    return value


# -- coefficients ----------------------------------------------------------------


def collect_coefficients(e, variables: Iterable) -> dict[sp.Expr, sp.Expr]:
    """Split ``e`` as a polynomial in ``variables``: ``{monomial: coefficient}``."""
    variables = sorted(set(sp.sympify(v) for v in variables), key=sp.default_sort_key)
    e = normalize(e)
    if e == 0:
        return {}
    if not variables:
        return {sp.S.One: e}
    vset = set(variables)
    num, den = sp.fraction(e)
    if den.free_symbols & vset:
        raise NonPolynomialError(f"denominator {den} depends on {vset & den.free_symbols}", den)
    shielded, restore = _shield(num) if num.has(sp.Integral) else (num, {})
    try:
        poly = sp.Poly(shielded, *variables)
    except sp.PolynomialError:
        bad = _offending(num, vset)
        raise NonPolynomialError(f"non-polynomial dependence through {bad}", bad) from None
    out = {}
    for monom, coeff in poly.terms():
        coeff = coeff.xreplace(restore) if restore else coeff
        bad = _offending(coeff, vset)
        if bad is not None:
            raise NonPolynomialError(f"non-polynomial dependence through {bad}", bad)
        key = sp.Mul(*[v**k for v, k in zip(variables, monom)])
        value = normalize(coeff / den)
        if value != 0:
            out[key] = value
    return out


def _offending(e, vset):
    if not (e.free_symbols & vset):
        return None
    for node in sp.preorder_traversal(e):
        if not node.is_Atom and not isinstance(node, (sp.Add, sp.Mul, sp.Pow)):
            if node.free_symbols & vset:
                return node
    return e


# -- unknown functions -------------------------------------------------------------


def unknown_atoms(e) -> set:
    """Applied unknown functions and their derivatives occurring in ``e``."""
    e = sp.sympify(e)
    found = set(e.atoms(sp.Derivative))
    found |= {f for f in e.atoms(AppliedUndef)}
    return found


def replace_unknown(e, name: str, value, simplify: bool = True) -> sp.Expr:
    """Replace unknown function ``name`` (and its derivatives) by an explicit expression.

    ``value`` is written in the function's own arguments.
    """
    e = sp.sympify(e)
    value = sp.sympify(value)
    repl = {}
    for d in e.atoms(sp.Derivative):
        if isinstance(d.expr, AppliedUndef) and d.expr.func.__name__ == name:
            args = d.expr.args
            repl[d] = sp.diff(value, *d.variable_count) if args else value
    for f in e.atoms(AppliedUndef):
        if f.func.__name__ == name:
            repl[f] = value
    out = e.xreplace(repl)
    return normalize(out) if simplify else out
