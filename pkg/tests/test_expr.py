import random

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import on_function
from qsym.expr import (
    ClosureError,
    ContextError,
    Int,
    JetContext,
    MultiIndex,
    NonPolynomialError,
    SubstitutionError,
    collect_coefficients,
    is_zero,
    normalize,
    partial_derivative,
    replace_unknown,
    substitute,
    total_derivative,
    total_derivative_multi,
)
from qsym.samples import random_jet_expression

t, x, u = sp.symbols("t x u")


# -- multiindices and contexts ----------------------------------------------------


def test_multiindex_arithmetic():
    a, b = MultiIndex((1, 0)), MultiIndex((0, 2))
    assert a + b == b + a == MultiIndex((1, 2))
    assert (a + MultiIndex.unit(2, 1)).order == a.order + 1
    assert MultiIndex((2, 1)).dominates(a) and not a.dominates(b)
    assert sorted(MultiIndex((1, 2)).steps()) == [0, 1, 1]


def test_zero_jet_is_the_dependent_variable(heat_ctx):
    assert heat_ctx.jet("u", (0, 0)) == u
    assert heat_ctx.d("u", "t", "x") == heat_ctx.d("u", "x", "t")
    assert str(heat_ctx.d("u", "x", "x")) == "u_xx"


@pytest.mark.parametrize("ind, dep", [([], ["u"]), (["x"], []), (["x", "x"], ["u"])])
def test_context_rejects_bad_declarations(ind, dep):
    with pytest.raises(ContextError):
        JetContext(ind, dep)


def test_unknown_signature_is_enforced(heat_ctx):
    heat_ctx.unknown("h", ("t",))
    with pytest.raises(ContextError):
        heat_ctx.unknown("h", ("t", "x"))
    with pytest.raises(ContextError):
        heat_ctx.validate(sp.Function("h")(x))
    with pytest.raises(ContextError):
        heat_ctx.validate(sp.Symbol("v"))


# -- normalize and is_zero ----------------------------------------------------------


def test_normalize_examples(heat_ctx):
    ut, ux = heat_ctx.d("u", "t"), heat_ctx.d("u", "x")
    assert normalize(x * u + u * x) == 2 * x * u
    assert normalize(ux**2 - ux * ux) == 0
    assert normalize((t * ut + x * ux - 1) - (x * ux + t * ut - 1)) == 0


@pytest.mark.parametrize(
    "expr",
    [
        sp.Symbol("u_x") - sp.Symbol("u_x"),
        sp.exp(u) * sp.exp(-u) - 1,
        (x**2 / t) * (t / x**2) - 1,
        sp.exp(t + x) - sp.exp(t) * sp.exp(x),
        sp.exp(2 * t) - sp.exp(t) ** 2,
        Int(2 * sp.Function("h")(t), t) - 2 * Int(sp.Function("h")(t), t),
    ],
)
def test_is_zero_true(expr):
    assert is_zero(expr)


@pytest.mark.parametrize("expr", [sp.exp(t) - sp.exp(x), x / t - 1, sp.exp(t / 2) - sp.exp(t)])
def test_is_zero_false(expr):
    assert not is_zero(expr)


def test_antiderivative_normal_form_is_linear():
    h = sp.Function("h")(t)
    a = Int(h - 1, t)
    b = Int(h, t) - Int(1, t)
    assert normalize(a) == normalize(b)
    assert normalize(sp.diff(a, t)) == h - 1


polys = st.builds(
    lambda cs: sum(c * m for c, m in zip(cs, (1, x, u, x * u, u**2, sp.exp(u), 1 / (1 + x)))),
    st.lists(st.integers(-3, 3), min_size=7, max_size=7),
)


@settings(max_examples=40, deadline=None)
@given(polys, polys)
def test_normalize_idempotent_and_congruent(a, b):
    assert normalize(normalize(a)) == normalize(a)
    assert normalize(a + b) == normalize(normalize(a) + normalize(b))
    assert is_zero(a * b - b * a)


# -- differentiation ----------------------------------------------------------------


def test_partial_derivative_examples(heat_ctx):
    ut, ux, uxx = heat_ctx.d("u", "t"), heat_ctx.d("u", "x"), heat_ctx.d("u", "x", "x")
    assert normalize(partial_derivative(heat_ctx, t * ux**2 + u, ux)) == 2 * t * ux
    assert partial_derivative(heat_ctx, sp.exp(u), u) == sp.exp(u)
    assert partial_derivative(heat_ctx, ut - uxx, ut) == 1
    with pytest.raises(ContextError):
        partial_derivative(heat_ctx, u, sp.Symbol("v"))


def test_total_derivative_examples(heat_ctx):
    d = heat_ctx.d
    assert total_derivative(heat_ctx, u, "x") == d("u", "x")
    assert total_derivative(heat_ctx, x * d("u", "x"), "x") == normalize(d("u", "x") + x * d("u", "x", "x"))
    got = total_derivative(heat_ctx, -2 * t * d("u", "t") - x * d("u", "x"), "t")
    assert is_zero(got - (-2 * d("u", "t") - 2 * t * d("u", "t", "t") - x * d("u", "t", "x")))
    assert total_derivative_multi(heat_ctx, u, (0, 2)) == d("u", "x", "x")
    assert total_derivative_multi(heat_ctx, u, (1, 1)) == d("u", "t", "x")


@pytest.mark.parametrize("seed", range(6))
def test_total_derivative_matches_chain_rule_oracle(heat_ctx, seed):
    rng = random.Random(seed)
    e = random_jet_expression(rng, heat_ctx, rng.randint(1, 3))
    U = sp.Function("U")(t, x)
    for i, var in enumerate((t, x)):
        engine = on_function(heat_ctx, total_derivative(heat_ctx, e, i), U)
        oracle = sp.diff(on_function(heat_ctx, e, U), var)
        assert sp.expand(engine - oracle) == 0


@pytest.mark.parametrize("seed", range(5))
def test_total_derivatives_commute_and_obey_leibniz(heat_ctx, seed):
    rng = random.Random(100 + seed)
    a = random_jet_expression(rng, heat_ctx, rng.randint(1, 4))
    b = random_jet_expression(rng, heat_ctx, rng.randint(1, 2))
    D = lambda e, i: total_derivative(heat_ctx, e, i)
    assert is_zero(D(D(a, 0), 1) - D(D(a, 1), 0))
    assert is_zero(D(a * b, 1) - D(a, 1) * b - a * D(b, 1))


# -- substitution ---------------------------------------------------------------------


def test_substitute_examples(heat_ctx):
    d = heat_ctx.d
    assert substitute(heat_ctx, d("u", "t") - d("u", "x", "x"), {d("u", "t"): d("u", "x", "x")}) == 0
    assert substitute(heat_ctx, d("u", "t", "x"), {d("u", "t"): d("u", "x", "x")}, closure=True, cap=3) == d("u", "x", "x", "x")
    theta = heat_ctx.unknown("theta", ("t", "x", "u"))
    got = substitute(heat_ctx, d("u", "x", "x"), {d("u", "x"): theta}, closure=True, cap=2)
    assert is_zero(got - (theta.diff(x) + theta.diff(u) * theta))


def test_substitute_with_empty_rules_is_identity(heat_ctx):
    e = x * heat_ctx.d("u", "x") + u**2
    assert substitute(heat_ctx, e, {}) == normalize(e)


def test_substitute_errors(heat_ctx):
    d = heat_ctx.d
    with pytest.raises(SubstitutionError):
        substitute(heat_ctx, u, {d("u", "t"): d("u", "x")}, closure=True)
    with pytest.raises(SubstitutionError):
        substitute(heat_ctx, u, {d("u", "t"): d("u", "x"), d("u", "x"): u})


def test_closure_detects_cycles():
    ctx = JetContext(["t", "x"], ["u"])
    d = ctx.d
    # u_tt -> u_tx -> u_xx -> u_tt through the two rules
    rules = {d("u", "t"): d("u", "x"), d("u", "x", "x"): d("u", "t", "t")}
    with pytest.raises(ClosureError):
        substitute(ctx, d("u", "t", "t"), rules, closure=True, cap=4)


# -- coefficients --------------------------------------------------------------------


def test_collect_coefficients_examples(heat_ctx):
    a, b, c = sp.symbols("a b c")
    ux = heat_ctx.d("u", "x")
    assert collect_coefficients(a * ux**2 + b * ux + c, [ux]) == {ux**2: a, ux: b, sp.S.One: c}
    assert collect_coefficients(0, [ux, u]) == {}
    with pytest.raises(NonPolynomialError) as err:
        collect_coefficients(u + sp.exp(ux), [ux])
    assert err.value.subterm == sp.exp(ux)


@pytest.mark.parametrize("seed", range(4))
def test_collect_coefficients_reconstructs(heat_ctx, seed):
    rng = random.Random(seed)
    e = random_jet_expression(rng, heat_ctx, 2)
    variables = sorted(heat_ctx.jets_in(e, min_order=1), key=sp.default_sort_key)
    parts = collect_coefficients(e, variables)
    assert is_zero(sum((m * c for m, c in parts.items()), sp.S.Zero) - e)
    for c in parts.values():
        assert not (c.free_symbols & set(variables))


def test_replace_unknown_differentiates_the_value():
    g = sp.Function("g")(t, x)
    e = g.diff(x, 2) - g.diff(t)
    assert replace_unknown(e, "g", t + x**2 / 2) == 0
