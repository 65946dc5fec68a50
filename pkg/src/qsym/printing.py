"""Deterministic text forms of expressions: infix for people, prefix for machines."""

from __future__ import annotations

import sympy as sp
from sympy.printing.str import StrPrinter
from sympy.core.function import AppliedUndef

from .expr import Int, normalize


def _sorted_args(e):
    return sorted(e.args, key=sp.default_sort_key)


def to_prefix(e, simplify: bool = True) -> str:
    """S-expression such as ``(+ (* -1 x) (^ u 2))``; numbers print as ``p/q``."""
    if isinstance(e, (list, tuple, sp.MatrixBase)):
        return "(list " + " ".join(to_prefix(a, simplify) for a in e) + ")"
    e = sp.sympify(e)
    if simplify:
        e = normalize(e)
    return _prefix(e)


def _prefix(e) -> str:
    if isinstance(e, (list, tuple, sp.MatrixBase)):
        return "(list " + " ".join(_prefix(sp.sympify(a)) for a in e) + ")"
    if isinstance(e, sp.Rational):
        return str(e.p) if e.q == 1 else f"{e.p}/{e.q}"
    if isinstance(e, sp.Symbol):
        return e.name
    if isinstance(e, sp.Add):
        return "(+ " + " ".join(_prefix(a) for a in _sorted_args(e)) + ")"
    if isinstance(e, sp.Mul):
        return "(* " + " ".join(_prefix(a) for a in _sorted_args(e)) + ")"
    if isinstance(e, sp.Pow):
        return f"(^ {_prefix(e.base)} {_prefix(e.exp)})"
    if isinstance(e, sp.Derivative):
        steps = []
        for v, c in e.variable_count:
            steps.extend([v.name] * int(c))
        return f"(d {_prefix(e.expr)} {' '.join(steps)})"
    if isinstance(e, sp.Integral):
        return f"(int {_prefix(e.function)} " + " ".join(v.name for v in e.variables) + ")"
    if isinstance(e, AppliedUndef):
        return f"({e.func.__name__} " + " ".join(_prefix(a) for a in e.args) + ")"
    if isinstance(e, sp.Function):
        return f"({type(e).__name__.lower()} " + " ".join(_prefix(a) for a in e.args) + ")"
    if e is sp.pi:
        return "pi"
    if e is sp.E:
        return "(exp 1)"
    raise TypeError(f"no prefix form for {type(e).__name__}: {e}")


def to_infix(e) -> str:
    """Readable form with ``^`` for powers, ``Int(f, t)`` for antiderivatives.

    The output is valid input for the script parser.
    """
    if isinstance(e, (list, tuple, sp.MatrixBase)):
        return "[" + ", ".join(to_infix(a) for a in e) + "]"
    return _InfixPrinter({"order": "lex"}).doprint(sp.sympify(e))


class _InfixPrinter(StrPrinter):
    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")

    def _print_Integral(self, expr):
        inner = self._print(expr.function)
        for v in expr.variables:
            inner = f"Int({inner}, {self._print(v)})"
        return inner

    def _print_Derivative(self, expr):
        steps = []
        for v, c in expr.variable_count:
            steps.append(self._print(v) if c == 1 else f"{self._print(v)}, {c}")
        return f"d({self._print(expr.expr)}, {', '.join(steps)})"


__all__ = ["to_prefix", "to_infix", "Int"]
