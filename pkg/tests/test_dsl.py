import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qsym.cli import bundled_casebook
from qsym.dsl import (
    Case,
    Directive,
    Eq,
    Op,
    ScriptError,
    Unknown,
    format_script,
    format_statement,
    parse,
    tokenize,
)
from qsym.expr import Int

t, x, u = sp.symbols("t x u")
HEAD = "vars t x; dep u;\n"


def test_solved_form_equation():
    script = parse("vars t x; dep u; eq heat: d(u,t) = d(u,x,2);")
    (eq,) = [s for s in script.statements if isinstance(s, Eq)]
    assert eq.name == "heat"
    assert str(eq.lhs) == "u_t" and str(eq.rhs) == "u_xx"


def test_jet_shorthand_matches_d_notation():
    a = parse(HEAD + "eq e: u_t = u_xx;").statements[-1]
    b = parse(HEAD + "eq e: d(u, t) = d(u, x, 2);").statements[-1]
    assert a == b


def test_operator_coefficients():
    (op,) = parse(HEAD + "op G: t*dx - (1/2)*x*u*du;").statements[2:]
    assert isinstance(op, Op)
    coeffs = dict(op.coeffs)
    assert "t" not in coeffs
    assert coeffs["x"] == t
    assert coeffs["u"] == -sp.Rational(1, 2) * x * u


def test_template_with_unknown_function():
    script = parse(HEAD + "unknown theta(t,x,u); op Q: dx + theta*du;")
    unk, op = script.statements[2:]
    assert unk == Unknown("theta", ("t", "x", "u"))
    assert dict(op.coeffs) == {"x": 1, "u": sp.Function("theta")(t, x, u)}


def test_rationals_are_exact():
    (eq,) = parse(HEAD + "eq e: u_t = 1/3*u_xx + 2^-1*u;").statements[2:]
    assert eq.rhs == sp.Rational(1, 3) * sp.Symbol("u_xx") + u / 2


def test_antiderivative_literal():
    (eq,) = parse(HEAD + "unknown h(t); eq e: u_t = Int(h - 1, t)*u_x;").statements[3:]
    h = sp.Function("h")(t)
    assert eq.rhs.has(Int(h - 1, t))


def test_directives_and_cases():
    src = HEAD + 'eq e: u_t = u_xx; op P: dt; case e.1 expect fail "note": check-lie e P with c; derive qcond e P;'
    *_, case, derive = parse(src).statements
    assert isinstance(case, Case) and case.id == "e.1" and case.expect == "fail" and case.note == "note"
    assert case.directive == Directive("check-lie", ("e", "P"), (("with", ("c",)),))
    assert derive == Directive("derive", ("qcond", "e", "P"))


def test_comments_and_positions():
    toks = tokenize("# comment\n  vars t;")
    assert (toks[0].text, toks[0].line, toks[0].col) == ("vars", 2, 3)


@pytest.mark.parametrize(
    "src, where, message",
    [
        (HEAD + "eq e: u_t = v;", (2, 13), "undeclared symbol"),
        (HEAD + "unknown h(t);\neq e: u_t = h(t, x);", (3, 13), "takes 1 arguments"),
        (HEAD + "eq e: u_t = u_xx", (2, 17), "expected ';'"),
        (HEAD + "op P: dt*dx;", (2, 7), "not linear"),
        (HEAD + "frobnicate;", (2, 1), "unknown statement"),
        ("eq e: u_t = 1;", (1, 1), "declare vars and dep first"),
        (HEAD + "eq e: u_t = $;", (2, 13), "unexpected character"),
        (HEAD + "eq e: u_t = d(u, y);", (2, 18), "undeclared symbol"),
        (HEAD + "param k;\neq e: u_t = d(u, k);", (3, 15), "not an independent variable"),
    ],
)
def test_errors_carry_line_and_column(src, where, message):
    with pytest.raises(ScriptError) as err:
        parse(src)
    assert (err.value.line, err.value.col) == where
    assert message in str(err.value)
    assert str(err.value).startswith(f"{where[0]}:{where[1]}:")


def test_bundled_casebook_round_trips():
    first = parse(bundled_casebook())
    printed = format_script(first)
    assert parse(printed) == first
    assert format_script(parse(printed)) == printed


def test_ansatz_round_trip():
    src = HEAD + "ansatz a: u = phi(w)*exp(-x^2/(4*t)) where w = x/sqrt(t) solve x;"
    first = parse(src)
    assert parse(format_script(first)) == first
    decl = first.statements[-1]
    assert decl.phi == "phi" and decl.solve == ("x",)


coeff = st.sampled_from(["1", "t", "x*u", "-(1/2)*x*u", "exp(t + x)", "u^2 + 1", "(h - 1)/x", "Int(h, t)", "3/4"])
basis = st.sampled_from(["dt", "dx", "du"])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(coeff, basis), min_size=1, max_size=3))
def test_random_operators_round_trip(terms):
    src = HEAD + "unknown h(t);\nop Q: " + " + ".join(f"({c})*{b}" for c, b in terms) + ";"
    first = parse(src)
    printed = format_script(first)
    assert parse(printed) == first


@settings(max_examples=40, deadline=None)
@given(st.lists(coeff, min_size=1, max_size=4), st.sampled_from(["u_t", "u_x", "u_xx", "d(u, t, x)"]))
def test_random_equations_round_trip(parts, jet):
    src = HEAD + "unknown h(t);\neq e: u_t = " + " - ".join(f"({p})*{jet}" for p in parts) + ";"
    first = parse(src)
    line = format_statement(first.statements[-1])
    assert parse(HEAD + "unknown h(t);\n" + line) == first
