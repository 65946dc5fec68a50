"""Seeded random inputs for the property checks: polynomials, operators, heat solutions."""

from __future__ import annotations

import random
from math import factorial

import sympy as sp

from .expr import JetContext, MultiIndex
from .operators import VectorField


def rational(rng: random.Random, lo: int = -3, hi: int = 3, den: int = 2) -> sp.Rational:
    return sp.Rational(rng.randint(lo, hi), rng.randint(1, den))


def nonzero_rational(rng: random.Random, lo: int = -3, hi: int = 3, den: int = 2) -> sp.Rational:
    while True:
        q = rational(rng, lo, hi, den)
        if q != 0:
            return q


def random_polynomial(rng: random.Random, symbols, terms: int = 3, degree: int = 2) -> sp.Expr:
    """Sum of ``terms`` monomials of total degree <= ``degree`` with rational coefficients."""
    symbols = list(symbols)
    out = sp.S.Zero
    for _ in range(terms):
        mono = sp.S.One
        for _ in range(rng.randint(0, degree)):
            mono *= rng.choice(symbols)
        out += nonzero_rational(rng) * mono
    return out


def random_jet_expression(rng: random.Random, ctx: JetContext, order: int, terms: int = 3) -> sp.Expr:
    """A polynomial in x, u and jets up to ``order``; always contains a jet of that order."""
    jets = []
    for j in range(ctx.m):
        for alpha in _multiindices(ctx.n, order):
            jets.append(ctx.jet(j, alpha))
    top = [s for s in jets if ctx.jet_info(s)[1].order == order]
    base = list(ctx.independent) + jets
    e = random_polynomial(rng, base, terms=terms, degree=2)
    return e + nonzero_rational(rng) * rng.choice(top) * random_polynomial(rng, base, terms=1, degree=1)


def random_vector_field(rng: random.Random, ctx: JetContext, terms: int = 2, degree: int = 2) -> VectorField:
    base = list(ctx.independent) + list(ctx.dependent)
    xi = tuple(random_polynomial(rng, base, terms, degree) for _ in range(ctx.n))
    eta = tuple(random_polynomial(rng, base, terms, degree) for _ in range(ctx.m))
    return VectorField(ctx, xi, eta)


def _multiindices(n: int, max_order: int):
    out = []

    def rec(prefix, left):
        if len(prefix) == n:
            out.append(MultiIndex(prefix))
            return
        for c in range(left + 1):
            rec(prefix + [c], left - c)

    rec([], max_order)
    return [a for a in out if a.order <= max_order]


def heat_polynomial(k: int, t, x) -> sp.Expr:
    """``v_k = sum_j k! / (j! (k-2j)!) x^(k-2j) t^j``; solves ``u_t = u_xx``."""
    return sum(
        (sp.Integer(factorial(k)) / (factorial(j) * factorial(k - 2 * j)) * x ** (k - 2 * j) * t**j
         for j in range(k // 2 + 1)),
        sp.S.Zero,
    )


def random_heat_solution(rng: random.Random, t, x, terms: int = 2) -> sp.Expr:
    """Random combination of heat polynomials and (boosted) exponential solutions."""
    out = sp.S.Zero
    for _ in range(terms):
        kind = rng.randrange(3)
        c = nonzero_rational(rng)
        if kind == 0:
            out += c * heat_polynomial(rng.randint(0, 4), t, x)
        else:
            a = nonzero_rational(rng, -2, 2, 2)
            wave = sp.exp(a**2 * t + a * x)
            if kind == 1:
                out += c * wave
            else:
                # d/da of exp(a^2 t + a x)
                out += c * (x + 2 * a * t) * wave
    return out
